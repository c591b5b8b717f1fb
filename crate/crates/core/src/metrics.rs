//! Metrics computed from reward CDFs: KS distance, mean, quantiles (VaR),
//! CVaR, and aggregation over repeated trials.
//!
//! CDFs are right-continuous step functions on a [`RewardGrid`]: the value
//! at `ν_j` holds until `ν_{j+1}`. The distribution they describe puts mass
//! `F(ν_j) - F(ν_{j-1})` on the point `ν_j`, and every functional here works
//! on that discrete distribution, so the grid spacing is the resolution
//! floor of every metric. Quantiles use the left-continuous inverse on the
//! grid without interpolation.
//!
//! Functionals that are non-linear in the CDF (quantiles, CVaR) are biased
//! when computed from an estimated CDF; only linear functionals such as the
//! mean inherit unbiasedness from the estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{CdfEstimate, RewardGrid};

/// Tolerance on the final value of a complete CDF.
pub const MASS_TOL: f64 = 1e-9;

/// Monotone CDF on a grid with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCdf {
    grid: RewardGrid,
    values: Vec<f64>,
    /// Set when the final value falls short of one.
    under_mass: bool,
}

impl StepCdf {
    /// Validates a complete CDF (final value one within [`MASS_TOL`]).
    pub fn new(grid: RewardGrid, values: Vec<f64>) -> Result<Self> {
        let cdf = Self::with_partial_mass(grid, values)?;
        if cdf.under_mass {
            return Err(Error::InvalidCdf(format!(
                "final value {} is not 1",
                cdf.mass()
            )));
        }
        Ok(cdf)
    }

    /// Validates a monotone, `[0, 1]`-valued CDF whose total mass may be below one.
    pub fn with_partial_mass(grid: RewardGrid, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidCdf(format!(
                "{} grid points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0 + MASS_TOL).contains(v)) {
            return Err(Error::InvalidCdf("values must lie in [0, 1]".into()));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidCdf("values must be non-decreasing".into()));
        }
        let under_mass = values[values.len() - 1] < 1.0 - MASS_TOL;
        Ok(Self {
            grid,
            values,
            under_mass,
        })
    }

    /// Builds a CDF from point masses `(ν, p)` over `grid`; every `ν` must
    /// be a grid point.
    pub fn from_jumps(grid: RewardGrid, jumps: &[(f64, f64)]) -> Result<Self> {
        let mut mass = vec![0.0; grid.len()];
        for &(nu, p) in jumps {
            let j = grid.bin_index(nu);
            if j == grid.len() || grid.points()[j] != nu {
                return Err(Error::InvalidCdf(format!("{nu} is not a grid point")));
            }
            mass[j] += p;
        }
        let mut acc = 0.0;
        let values = mass
            .into_iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        Self::with_partial_mass(grid, values)
    }

    pub fn grid(&self) -> &RewardGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn under_mass(&self) -> bool {
        self.under_mass
    }

    /// Final value.
    pub fn mass(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Step evaluation: value at the last grid point `<= nu`, zero below the grid.
    pub fn eval(&self, nu: f64) -> f64 {
        let j = self.grid.points().partition_point(|&p| p <= nu);
        if j == 0 {
            0.0
        } else {
            self.values[j - 1]
        }
    }

    /// Same CDF evaluated on another grid.
    pub fn resample(&self, grid: &RewardGrid) -> StepCdf {
        let values: Vec<f64> = grid.points().iter().map(|&nu| self.eval(nu)).collect();
        let under_mass = values[values.len() - 1] < 1.0 - MASS_TOL;
        StepCdf {
            grid: grid.clone(),
            values,
            under_mass,
        }
    }

    /// Sets the final value to one, placing any missing mass on the top grid
    /// point. Valid whenever the grid's top point bounds every reward.
    pub fn completed(&self) -> StepCdf {
        let mut values = self.values.clone();
        let last = values.len() - 1;
        values[last] = 1.0;
        StepCdf {
            grid: self.grid.clone(),
            values,
            under_mass: false,
        }
    }

    /// Point masses `(ν_j, ΔF_j)`, including zero jumps.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mut prev = 0.0;
        self.grid
            .points()
            .iter()
            .zip(&self.values)
            .map(move |(&nu, &f)| {
                let d = f - prev;
                prev = f;
                (nu, d)
            })
    }
}

/// Running maximum over the grid, then clipping to `[0, 1]`.
pub fn monotone_repair(raw: &CdfEstimate) -> StepCdf {
    repair_values(&raw.grid, &raw.values)
}

pub(crate) fn repair_values(grid: &RewardGrid, raw: &[f64]) -> StepCdf {
    let mut running = f64::NEG_INFINITY;
    let values: Vec<f64> = raw
        .iter()
        .map(|&v| {
            running = running.max(v);
            running.clamp(0.0, 1.0)
        })
        .collect();
    let under_mass = values.last().is_none_or(|&v| v < 1.0 - MASS_TOL);
    StepCdf {
        grid: grid.clone(),
        values,
        under_mass,
    }
}

/// Largest absolute gap between two CDFs on a shared grid.
pub fn ks_statistic(estimate: &StepCdf, truth: &StepCdf) -> Result<f64> {
    if estimate.grid != truth.grid {
        return Err(Error::GridMismatch {
            left: estimate.grid.len(),
            right: truth.grid.len(),
        });
    }
    Ok(sup_gap(&estimate.values, &truth.values))
}

/// KS statistic after resampling `truth` onto the estimate's grid.
pub fn ks_statistic_resampled(estimate: &StepCdf, truth: &StepCdf) -> f64 {
    if estimate.grid == truth.grid {
        return sup_gap(&estimate.values, &truth.values);
    }
    let t = truth.resample(&estimate.grid);
    sup_gap(&estimate.values, &t.values)
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Mean of the discrete distribution implied by a CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFromCdf {
    /// `Σ_j ν_j ΔF_j`, not renormalized when `mass < 1`.
    pub value: f64,
    /// Total mass the sum ran over.
    pub mass: f64,
}

pub fn mean_from_cdf(cdf: &StepCdf) -> MeanFromCdf {
    MeanFromCdf {
        value: cdf.jumps().map(|(nu, d)| nu * d).sum(),
        mass: cdf.mass(),
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1)")))
    }
}

fn quantile_index(cdf: &StepCdf, alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    let j = cdf.values.partition_point(|&f| f < alpha);
    if j == cdf.values.len() {
        return Err(Error::InsufficientMass {
            mass: cdf.mass(),
            alpha,
        });
    }
    Ok(j)
}

/// Smallest grid point with `F(ν) >= alpha`. `VaR_α` is `quantile(cdf, α)`.
pub fn quantile(cdf: &StepCdf, alpha: f64) -> Result<f64> {
    Ok(cdf.grid.points()[quantile_index(cdf, alpha)?])
}

pub fn median(cdf: &StepCdf) -> Result<f64> {
    quantile(cdf, 0.5)
}

/// Expected reward over the lowest `alpha` of the mass. The jump at
/// `VaR_α` is truncated so exactly `alpha` mass is included.
pub fn cvar(cdf: &StepCdf, alpha: f64) -> Result<f64> {
    let q = quantile_index(cdf, alpha)?;
    let points = cdf.grid.points();
    let mut total = 0.0;
    let mut prev = 0.0;
    for (&p, &v) in points[..q].iter().zip(&cdf.values[..q]) {
        total += p * (v - prev);
        prev = v;
    }
    total += points[q] * (alpha - prev);
    Ok(total / alpha)
}

/// Per-trial values of one metric for one estimator at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub estimator: String,
    pub n: usize,
    pub metric: String,
    pub values: Vec<f64>,
}

/// Cross-trial statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials)`; NaN for a single trial.
    pub standard_error: f64,
    /// Mean of `(value - ground_truth)^2`.
    pub mse: f64,
    pub trials: usize,
}

pub fn aggregate_trials(values: &[f64], ground_truth: f64) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no trials to aggregate".into()));
    }
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    Ok(Aggregate {
        mean,
        standard_error: standard_error(values, mean),
        mse: values.iter().map(|v| (v - ground_truth).powi(2)).sum::<f64>() / t,
        trials: values.len(),
    })
}

pub(crate) fn standard_error(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let t = values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
    (var / t).sqrt()
}

impl TrialSummary {
    pub fn aggregate(&self, ground_truth: f64) -> Result<Aggregate> {
        aggregate_trials(&self.values, ground_truth)
    }
}

/// One line of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub estimator: String,
    pub n: usize,
    pub trials: usize,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

/// Metrics of a single CDF as report records (`mean`, `median`, `var`, `cvar`,
/// and `ks` when a reference CDF is supplied). Missing mass is placed on the
/// top grid point first.
pub fn cdf_report(
    estimator: &str,
    n: usize,
    cdf: &StepCdf,
    truth: Option<&StepCdf>,
    alpha: f64,
) -> Result<Vec<MetricRecord>> {
    let complete = cdf.completed();
    let record = |metric: &str, value: f64| MetricRecord {
        estimator: estimator.to_string(),
        n,
        trials: 1,
        metric: metric.to_string(),
        value,
        stderr: None,
    };
    let mut out = vec![
        record("mean", mean_from_cdf(&complete).value),
        record("median", median(&complete)?),
        record("var", quantile(&complete, alpha)?),
        record("cvar", cvar(&complete, alpha)?),
        record("mass", cdf.mass()),
    ];
    if let Some(t) = truth {
        out.push(record("ks", ks_statistic_resampled(cdf, t)));
    }
    Ok(out)
}
