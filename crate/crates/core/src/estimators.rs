//! Importance weights and off-policy CDF estimation.
//!
//! For a logged slate `A` under context `x`, let `Y_k = π(A^k|x) / μ_k(A^k|x)`
//! be the slot density ratios. The estimators differ only in how the ratios
//! are combined:
//!
//! * [`WeightKind::Product`]: `Π_k Y_k`, the full-slate importance ratio (UnO).
//! * [`WeightKind::Additive`]: `1 - K + Σ_k Y_k` (SUnO). Unbiased for CDFs that
//!   decompose additively over slots; can be negative.
//! * [`WeightKind::Subsets`]`(m)`: `Σ_{|S| = m} (Π_{k∈S} Y_k - 1) + 1`, for
//!   CDFs that decompose over `m`-slot subsets. `m = 1` is the additive
//!   weight and `m = K` the product weight, bit for bit.
//!
//! The CDF estimate at `ν` is `(1/n) Σ_i w_i 1{R_i ≤ ν}`, evaluated on a
//! [`RewardGrid`] with one sort and one sweep. Raw estimates are not clipped
//! or monotonized here; see [`crate::metrics::monotone_repair`].

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::policy::FactoredPolicy;
use crate::slate::{fmt_real, ContextId, LogDataset, RewardRange};

/// Default number of grid points.
pub const DEFAULT_GRID_SIZE: usize = 1000;

/// How slot density ratios are combined into a slate weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightKind {
    /// Product of slot ratios (UnO).
    Product,
    /// Slot-additive weight (SUnO).
    Additive,
    /// `m`-subset generalization.
    Subsets(usize),
    /// Inclusion-exclusion weight `Σ_{|T| <= m} Π_{i in T} (Y_i - 1)`.
    ///
    /// Unlike [`Subsets`](Self::Subsets) this stays unbiased when the
    /// `m`-slot components of the reward CDF share slots. Equals the additive
    /// weight at `m = 1` and the product at `m = K` up to rounding.
    Centered(usize),
}

impl WeightKind {
    /// Short name used in files and on the command line.
    pub fn name(&self) -> String {
        self.to_string()
    }

    fn check(&self, num_slots: usize) -> Result<()> {
        if let WeightKind::Subsets(m) | WeightKind::Centered(m) = *self {
            if m == 0 || m > num_slots {
                return Err(Error::InvalidArgument(format!(
                    "subset order m = {m} must lie in [1, {num_slots}]"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightKind::Product => f.write_str("uno"),
            WeightKind::Additive => f.write_str("suno"),
            WeightKind::Subsets(m) => write!(f, "gm:{m}"),
            WeightKind::Centered(m) => write!(f, "ie:{m}"),
        }
    }
}

impl FromStr for WeightKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uno" | "product" => Ok(WeightKind::Product),
            "suno" | "additive" => Ok(WeightKind::Additive),
            other => {
                let order = |prefix: &str| {
                    other
                        .strip_prefix(prefix)
                        .map(|m| m.strip_prefix(':').unwrap_or(m))
                        .and_then(|m| m.parse::<usize>().ok())
                        .filter(|&m| m > 0)
                };
                if let Some(m) = order("gm") {
                    Ok(WeightKind::Subsets(m))
                } else if let Some(m) = order("ie") {
                    Ok(WeightKind::Centered(m))
                } else {
                    Err(Error::InvalidArgument(format!(
                        "unknown estimator '{s}' (expected uno, suno, gm:<m> or ie:<m>)"
                    )))
                }
            }
        }
    }
}

impl Serialize for WeightKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for WeightKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `C(n, k)` in floating point.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Slot density ratios `π(A^k|x) / μ_k(A^k|x)` for one logged slate.
pub fn slot_ratios<T, L>(
    target: &T,
    logging: &L,
    context: ContextId,
    slate: &[usize],
    out: &mut Vec<f64>,
) -> Result<()>
where
    T: FactoredPolicy + ?Sized,
    L: FactoredPolicy + ?Sized,
{
    logging.config().validate(slate)?;
    out.clear();
    for (slot, &action) in slate.iter().enumerate() {
        let mu = logging.slot_prob(context, slot, action);
        if mu <= 0.0 {
            return Err(Error::SupportViolation {
                context: context.0,
                slot,
                action,
            });
        }
        out.push(target.slot_prob(context, slot, action) / mu);
    }
    Ok(())
}

/// Combines slot ratios into a slate weight.
///
/// The subset weight uses the elementary symmetric polynomial `e_m(Y)`,
/// built with the usual one-pass recurrence, instead of walking all
/// `C(K, m)` subsets. The recurrence's extreme terms reproduce the plain
/// sum and the plain product in the same evaluation order, which is what
/// makes the `m = 1` and `m = K` collapses exact.
pub fn combine_ratios(kind: WeightKind, ratios: &[f64]) -> f64 {
    let k = ratios.len();
    match kind {
        WeightKind::Product => ratios.iter().product(),
        WeightKind::Additive => ratios.iter().sum::<f64>() + (1.0 - k as f64),
        WeightKind::Subsets(m) => {
            let mut e = vec![0.0; m + 1];
            e[0] = 1.0;
            for (i, &y) in ratios.iter().enumerate() {
                for j in (1..=m.min(i + 1)).rev() {
                    e[j] += y * e[j - 1];
                }
            }
            e[m] + (1.0 - binomial(k, m))
        }
        WeightKind::Centered(m) => {
            let mut e = vec![0.0; m + 1];
            e[0] = 1.0;
            for (i, &y) in ratios.iter().enumerate() {
                for j in (1..=m.min(i + 1)).rev() {
                    e[j] += (y - 1.0) * e[j - 1];
                }
            }
            e.iter().sum()
        }
    }
}

/// Importance weight of one logged slate.
pub fn importance_weight<T, L>(
    kind: WeightKind,
    target: &T,
    logging: &L,
    context: ContextId,
    slate: &[usize],
) -> Result<f64>
where
    T: FactoredPolicy + ?Sized,
    L: FactoredPolicy + ?Sized,
{
    kind.check(slate.len())?;
    let mut ratios = Vec::with_capacity(slate.len());
    slot_ratios(target, logging, context, slate, &mut ratios)?;
    Ok(combine_ratios(kind, &ratios))
}

/// Per-entry weights for a whole dataset, in dataset order.
pub fn dataset_weights<T, L>(
    kind: WeightKind,
    target: &T,
    logging: &L,
    data: &LogDataset,
    exec: Execution,
) -> Result<Vec<f64>>
where
    T: FactoredPolicy + ?Sized,
    L: FactoredPolicy + ?Sized,
{
    kind.check(data.config().num_slots)?;
    let chunk = 4096;
    let chunks: Vec<usize> = (0..data.len().div_ceil(chunk)).collect();
    let parts = par::try_map_slice(exec, &chunks, |&c| {
        let start = c * chunk;
        let end = (start + chunk).min(data.len());
        let mut ratios = Vec::with_capacity(data.config().num_slots);
        (start..end)
            .map(|i| {
                let e = data.entry(i);
                slot_ratios(target, logging, e.context, e.slate, &mut ratios)?;
                Ok(combine_ratios(kind, &ratios))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(parts.concat())
}

/// Evenly spaced (or arbitrary strictly increasing) evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardGrid {
    points: Vec<f64>,
}

impl RewardGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("no points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidGrid("non-finite point".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// `size` evenly spaced points from `range.min` to `range.max` inclusive.
    pub fn uniform(range: RewardRange, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {size}")));
        }
        let step = range.width() / (size - 1) as f64;
        let mut points: Vec<f64> = (0..size).map(|j| range.min + step * j as f64).collect();
        points[size - 1] = range.max;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Widest gap between neighbouring points.
    pub fn cell_width(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn covers(&self, range: RewardRange) -> bool {
        self.first() <= range.min && self.last() >= range.max
    }

    /// Index of the first point `>= r`, or `len()` if none.
    ///
    /// Starts from the position `r` would have on an evenly spaced grid and
    /// walks a few steps; falls back to binary search otherwise.
    pub fn bin_index(&self, r: f64) -> usize {
        let len = self.points.len();
        let (lo, hi) = (self.first(), self.last());
        if r.is_nan() || r <= lo {
            return 0;
        }
        if r > hi {
            return len;
        }
        let guess = ((r - lo) / (hi - lo) * (len - 1) as f64).ceil();
        let mut j = (guess as usize).min(len - 1);
        for _ in 0..4 {
            if j > 0 && self.points[j - 1] >= r {
                j -= 1;
            } else if self.points[j] < r {
                j += 1;
            } else {
                return j;
            }
        }
        self.points.partition_point(|&p| p < r)
    }
}

/// Summary statistics of the per-entry weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagnostics {
    pub n: usize,
    pub mean: f64,
    /// Population variance of the weights.
    pub variance: f64,
    pub ess: f64,
    pub fraction_zero: f64,
    pub fraction_negative: f64,
}

impl WeightDiagnostics {
    pub fn from_weights(weights: &[f64], exec: Execution) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = weights.len() as f64;
        let mean = par::pairwise_sum(exec, weights) / n;
        let centered: Vec<f64> = weights.iter().map(|w| (w - mean) * (w - mean)).collect();
        let variance = par::pairwise_sum(exec, &centered) / n;
        let zeros = weights.iter().filter(|&&w| w == 0.0).count() as f64;
        let negatives = weights.iter().filter(|&&w| w < 0.0).count() as f64;
        Ok(Self {
            n: weights.len(),
            mean,
            variance,
            ess: ess_with(weights, exec),
            fraction_zero: zeros / n,
            fraction_negative: negatives / n,
        })
    }
}

/// `(Σ w)^2 / Σ w^2`; zero when every weight is zero.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    ess_with(weights, Execution::Sequential)
}

fn ess_with(weights: &[f64], exec: Execution) -> f64 {
    let sum = par::pairwise_sum(exec, weights);
    let squares: Vec<f64> = weights.iter().map(|w| w * w).collect();
    let sum_sq = par::pairwise_sum(exec, &squares);
    if sum_sq == 0.0 {
        0.0
    } else {
        sum * sum / sum_sq
    }
}

/// Weight summary for a dataset.
pub fn weight_diagnostics<T, L>(
    kind: WeightKind,
    target: &T,
    data: &LogDataset,
    logging: &L,
) -> Result<WeightDiagnostics>
where
    T: FactoredPolicy + ?Sized,
    L: FactoredPolicy + ?Sized,
{
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let exec = Execution::default();
    let w = dataset_weights(kind, target, logging, data, exec)?;
    WeightDiagnostics::from_weights(&w, exec)
}

/// Raw weighted CDF estimate on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfEstimate {
    pub grid: RewardGrid,
    /// May leave `[0, 1]` and be non-monotone.
    pub values: Vec<f64>,
    pub n_used: usize,
    pub weight_kind: WeightKind,
    pub diagnostics: WeightDiagnostics,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    weight_kind: WeightKind,
    n_used: usize,
    diagnostics: WeightDiagnostics,
}

impl CdfEstimate {
    /// Writes the `nu,value` table.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "nu,value")?;
        for (nu, v) in self.grid.points().iter().zip(&self.values) {
            writeln!(out, "{},{}", fmt_real(*nu), fmt_real(*v))?;
        }
        Ok(())
    }

    /// JSON sidecar with `weight_kind`, `n_used` and `diagnostics`.
    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Sidecar {
            weight_kind: self.weight_kind,
            n_used: self.n_used,
            diagnostics: self.diagnostics,
        })?)
    }

    /// Inverse of [`write_csv`](Self::write_csv) plus [`sidecar_json`](Self::sidecar_json).
    pub fn read(csv_text: &str, sidecar: &str) -> Result<Self> {
        let meta: Sidecar = serde_json::from_str(sidecar)?;
        let mut lines = csv_text.lines();
        if lines.next().map(str::trim) != Some("nu,value") {
            return Err(Error::Parse {
                line: 1,
                message: "expected header 'nu,value'".into(),
            });
        }
        let (mut nus, mut values) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parse = |s: Option<&str>| {
                s.and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        line: i + 2,
                        message: "expected two reals".into(),
                    })
            };
            let mut parts = line.split(',');
            nus.push(parse(parts.next())?);
            values.push(parse(parts.next())?);
        }
        Ok(Self {
            grid: RewardGrid::new(nus)?,
            values,
            n_used: meta.n_used,
            weight_kind: meta.weight_kind,
            diagnostics: meta.diagnostics,
        })
    }
}

/// `(1/n) Σ_i w_i 1{R_i ≤ ν}` at every grid point, from precomputed weights.
///
/// Rewards are sorted once (ties broken by row index, so the summation order
/// is fixed) and weights are accumulated in reward order.
pub fn cdf_from_weights(
    rewards: &[f64],
    weights: &[f64],
    grid: &RewardGrid,
    exec: Execution,
) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if rewards.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rewards but {} weights",
            rewards.len(),
            weights.len()
        )));
    }
    let mut order: Vec<u32> = (0..rewards.len() as u32).collect();
    let by_reward = |a: &u32, b: &u32| {
        rewards[*a as usize]
            .total_cmp(&rewards[*b as usize])
            .then(a.cmp(b))
    };
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::slice::ParallelSliceMut;
        order.par_sort_unstable_by(by_reward);
    } else {
        order.sort_unstable_by(by_reward);
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = exec;
        order.sort_unstable_by(by_reward);
    }

    let n = rewards.len() as f64;
    let mut values = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    let mut next = 0;
    for &nu in grid.points() {
        while next < order.len() && rewards[order[next] as usize] <= nu {
            acc += weights[order[next] as usize];
            next += 1;
        }
        values.push(acc / n);
    }
    Ok(values)
}

/// Weighted off-policy estimate of the target reward CDF.
pub fn estimate_cdf<T, L>(
    kind: WeightKind,
    target: &T,
    data: &LogDataset,
    logging: &L,
    grid: &RewardGrid,
) -> Result<CdfEstimate>
where
    T: FactoredPolicy + ?Sized,
    L: FactoredPolicy + ?Sized,
{
    estimate_cdf_with(kind, target, data, logging, grid, Execution::default())
}

pub fn estimate_cdf_with<T, L>(
    kind: WeightKind,
    target: &T,
    data: &LogDataset,
    logging: &L,
    grid: &RewardGrid,
    exec: Execution,
) -> Result<CdfEstimate>
where
    T: FactoredPolicy + ?Sized,
    L: FactoredPolicy + ?Sized,
{
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !grid.covers(data.reward_range()) {
        return Err(Error::InvalidGrid(format!(
            "grid [{}, {}] does not span the reward range [{}, {}]",
            grid.first(),
            grid.last(),
            data.reward_range().min,
            data.reward_range().max
        )));
    }
    let weights = dataset_weights(kind, target, logging, data, exec)?;
    let values = cdf_from_weights(data.rewards(), &weights, grid, exec)?;
    Ok(CdfEstimate {
        grid: grid.clone(),
        values,
        n_used: data.len(),
        weight_kind: kind,
        diagnostics: WeightDiagnostics::from_weights(&weights, exec)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{EpsilonGreedyPolicy, TablePolicy, UniformPolicy};
    use crate::rng::rng_from_seed;
    use crate::slate::{enumerate_slates, Slate, SlateConfig};
    use rand::Rng;

    fn cfg(k: usize, n: usize) -> SlateConfig {
        SlateConfig::new(k, n).unwrap()
    }

    /// Direct walk over all index subsets of size `m`.
    fn subset_weight_oracle(ratios: &[f64], m: usize) -> f64 {
        fn walk(r: &[f64], m: usize, start: usize, prod: f64, acc: &mut f64) {
            if m == 0 {
                *acc += prod - 1.0;
                return;
            }
            for i in start..=r.len() - m {
                walk(r, m - 1, i + 1, prod * r[i], acc);
            }
        }
        let mut acc = 0.0;
        walk(ratios, m, 0, 1.0, &mut acc);
        acc + 1.0
    }

    #[test]
    fn identical_policies_give_unit_weight() {
        let c = cfg(3, 4);
        let mut rng = rng_from_seed(5);
        let p = TablePolicy::random(c, 1, 0.1, &mut rng);
        for kind in [
            WeightKind::Product,
            WeightKind::Additive,
            WeightKind::Subsets(1),
            WeightKind::Subsets(2),
            WeightKind::Subsets(3),
        ] {
            for s in enumerate_slates(c).unwrap() {
                let w = importance_weight(kind, &p, &p, ContextId(0), &s).unwrap();
                assert_eq!(w, 1.0, "{kind} on {s:?}");
            }
        }
    }

    #[test]
    fn hand_example_two_slots() {
        let c = cfg(2, 2);
        let mu = UniformPolicy::new(c);
        let pi = EpsilonGreedyPolicy::shared(c, 0.0, Slate(vec![0, 0]), 1).unwrap();
        // matches slot 1 only: Y = (2, 0)
        let s = [0, 1];
        let uno = importance_weight(WeightKind::Product, &pi, &mu, ContextId(0), &s).unwrap();
        let suno = importance_weight(WeightKind::Additive, &pi, &mu, ContextId(0), &s).unwrap();
        assert_eq!(uno, 0.0);
        assert_eq!(suno, 1.0);
    }

    #[test]
    fn subset_weight_matches_direct_enumeration() {
        let mut rng = rng_from_seed(17);
        for _ in 0..500 {
            let k = rng.random_range(1..=7);
            let ratios: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..5.0)).collect();
            for m in 1..=k {
                let fast = combine_ratios(WeightKind::Subsets(m), &ratios);
                let slow = subset_weight_oracle(&ratios, m);
                assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1.0), "{fast} vs {slow}");
            }
        }
    }

    #[test]
    fn collapse_identities_are_exact() {
        let mut rng = rng_from_seed(23);
        for _ in 0..1000 {
            let k = rng.random_range(1..=8);
            let ratios: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..40.0)).collect();
            let prod = combine_ratios(WeightKind::Product, &ratios);
            let add = combine_ratios(WeightKind::Additive, &ratios);
            assert_eq!(combine_ratios(WeightKind::Subsets(k), &ratios).to_bits(), prod.to_bits());
            assert_eq!(combine_ratios(WeightKind::Subsets(1), &ratios).to_bits(), add.to_bits());
        }
    }

    /// `Σ_{|T| <= m} Π_{i in T} (Y_i - 1)` by walking subsets.
    fn centered_weight_oracle(ratios: &[f64], m: usize) -> f64 {
        fn walk(r: &[f64], left: usize, start: usize, prod: f64, acc: &mut f64) {
            *acc += prod;
            if left == 0 {
                return;
            }
            for i in start..r.len() {
                walk(r, left - 1, i + 1, prod * (r[i] - 1.0), acc);
            }
        }
        let mut acc = 0.0;
        walk(ratios, m, 0, 1.0, &mut acc);
        acc
    }

    #[test]
    fn centered_weight_matches_direct_enumeration() {
        let mut rng = rng_from_seed(19);
        for _ in 0..500 {
            let k = rng.random_range(1..=7);
            let ratios: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..5.0)).collect();
            for m in 1..=k {
                let fast = combine_ratios(WeightKind::Centered(m), &ratios);
                let slow = centered_weight_oracle(&ratios, m);
                assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1.0), "{fast} vs {slow}");
            }
            let tol = |x: f64| 1e-9 * x.abs().max(1.0);
            let prod = combine_ratios(WeightKind::Product, &ratios);
            let add = combine_ratios(WeightKind::Additive, &ratios);
            assert!((combine_ratios(WeightKind::Centered(k), &ratios) - prod).abs() <= tol(prod));
            assert!((combine_ratios(WeightKind::Centered(1), &ratios) - add).abs() <= tol(add));
        }
    }

    /// `E_μ[W(A) ψ(A_1, A_2)]` against `E_π[ψ(A_1, A_2)]` for a random
    /// pairwise table, by enumeration over K = 3 slots.
    fn pairwise_gap(kind: WeightKind, seed: u64) -> f64 {
        let c = cfg(3, 3);
        let mut rng = rng_from_seed(seed);
        let mu = TablePolicy::random(c, 1, 0.2, &mut rng);
        let pi = TablePolicy::random(c, 1, 0.0, &mut rng);
        let psi: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
        let (mut est, mut truth) = (0.0, 0.0);
        for s in enumerate_slates(c).unwrap() {
            let v = psi[s[0] * 3 + s[1]];
            let w = importance_weight(kind, &pi, &mu, ContextId(0), &s).unwrap();
            est += crate::policy::slate_prob(&mu, ContextId(0), &s).unwrap() * w * v;
            truth += crate::policy::slate_prob(&pi, ContextId(0), &s).unwrap() * v;
        }
        (est - truth).abs()
    }

    #[test]
    fn centered_weight_is_exact_on_overlapping_pairs() {
        for seed in 0..20 {
            assert!(pairwise_gap(WeightKind::Centered(2), seed) < 1e-12);
        }
    }

    #[test]
    fn subset_weight_is_biased_on_overlapping_pairs() {
        // Σ_{|S|=2}(Π Y - 1) + 1 keeps cross terms such as Y_1·Y_3·ψ(A_1, A_2)
        // whose expectation is not E_μ[ψ]
        let worst = (0..20).map(|s| pairwise_gap(WeightKind::Subsets(2), s)).fold(0.0, f64::max);
        assert!(worst > 1e-3, "{worst}");
    }

    #[test]
    fn support_violation_names_slot_and_action() {
        let c = cfg(2, 3);
        let mu = TablePolicy::new(c, vec![vec![vec![0.5, 0.5, 0.0], vec![1.0 / 3.0; 3]]]).unwrap();
        let pi = UniformPolicy::new(c);
        let err = importance_weight(WeightKind::Additive, &pi, &mu, ContextId(0), &[2, 0]).unwrap_err();
        match err {
            Error::SupportViolation { slot, action, .. } => assert_eq!((slot, action), (0, 2)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_subset_order_rejected() {
        let c = cfg(2, 2);
        let p = UniformPolicy::new(c);
        assert!(importance_weight(WeightKind::Subsets(0), &p, &p, ContextId(0), &[0, 0]).is_err());
        assert!(importance_weight(WeightKind::Subsets(3), &p, &p, ContextId(0), &[0, 0]).is_err());
        assert!(importance_weight(WeightKind::Centered(3), &p, &p, ContextId(0), &[0, 0]).is_err());
    }

    #[test]
    fn weight_kind_names_round_trip() {
        for kind in [WeightKind::Product, WeightKind::Additive, WeightKind::Subsets(3), WeightKind::Centered(2)] {
            assert_eq!(kind.name().parse::<WeightKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(serde_json::from_str::<WeightKind>(&json).unwrap(), kind);
        }
        assert!("gm:0".parse::<WeightKind>().is_err());
        assert!("ips".parse::<WeightKind>().is_err());
    }

    #[test]
    fn ess_examples() {
        assert_eq!(effective_sample_size(&[1.0; 10]), 10.0);
        assert_eq!(effective_sample_size(&[2.0, 0.0]), 1.0);
        assert_eq!(effective_sample_size(&[1.0, 1.0, 0.0, 0.0]), 2.0);
        assert_eq!(effective_sample_size(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn grid_construction() {
        let r = RewardRange::new(0.0, 1.0).unwrap();
        let g = RewardGrid::uniform(r, 101).unwrap();
        assert_eq!(g.len(), 101);
        assert_eq!(g.first(), 0.0);
        assert_eq!(g.last(), 1.0);
        assert!(g.covers(r));
        assert!((g.cell_width() - 0.01).abs() < 1e-12);
        assert!(RewardGrid::new(vec![0.0, 0.0]).is_err());
        assert!(RewardGrid::new(vec![]).is_err());
        assert!(RewardGrid::uniform(r, 1).is_err());
        assert_eq!(g.bin_index(-1.0), 0);
        assert_eq!(g.bin_index(0.0), 0);
        assert_eq!(g.bin_index(0.005), 1);
        assert_eq!(g.bin_index(2.0), 101);
        assert_eq!(g.bin_index(f64::NAN), 0);
    }

    proptest::proptest! {
        #[test]
        fn bin_index_matches_binary_search(
            raw in proptest::collection::vec(0.001f64..1.0, 2..50),
            r in -0.5f64..30.0,
        ) {
            let mut acc = 0.0;
            let points: Vec<f64> = raw.iter().map(|d| { acc += d * d * 3.0; acc }).collect();
            let g = RewardGrid::new(points).unwrap();
            proptest::prop_assert_eq!(g.bin_index(r), g.points().partition_point(|&p| p < r));
            let u = RewardGrid::uniform(RewardRange::new(0.0, 7.0).unwrap(), raw.len() + 2).unwrap();
            proptest::prop_assert_eq!(u.bin_index(r), u.points().partition_point(|&p| p < r));
            for &p in u.points() {
                proptest::prop_assert_eq!(u.bin_index(p), u.points().partition_point(|&q| q < p));
            }
        }
    }

    fn toy_dataset(rewards: &[(usize, usize, f64)]) -> LogDataset {
        let c = cfg(2, 2);
        let mut d = LogDataset::new(c, RewardRange::new(0.0, 1.0).unwrap());
        for &(a, b, r) in rewards {
            d.push(ContextId(0), &[a, b], r).unwrap();
        }
        d
    }

    #[test]
    fn on_policy_estimate_is_empirical_cdf() {
        let mut rng = rng_from_seed(1);
        let rows: Vec<(usize, usize, f64)> = (0..257)
            .map(|_| (rng.random_range(0..2), rng.random_range(0..2), rng.random::<f64>()))
            .collect();
        let d = toy_dataset(&rows);
        let mu = UniformPolicy::new(d.config());
        let grid = RewardGrid::uniform(d.reward_range(), 50).unwrap();
        for kind in [WeightKind::Product, WeightKind::Additive] {
            let est = estimate_cdf(kind, &mu, &d, &mu, &grid).unwrap();
            for (nu, v) in grid.points().iter().zip(&est.values) {
                let count = d.rewards().iter().filter(|&&r| r <= *nu).count();
                assert_eq!(v.to_bits(), (count as f64 / d.len() as f64).to_bits());
            }
        }
    }

    #[test]
    fn single_entry_estimate() {
        let d = toy_dataset(&[(0, 1, 0.3)]);
        let mu = UniformPolicy::new(d.config());
        let pi = EpsilonGreedyPolicy::shared(d.config(), 0.0, Slate(vec![0, 0]), 1).unwrap();
        let grid = RewardGrid::uniform(d.reward_range(), 11).unwrap();
        let w = importance_weight(WeightKind::Additive, &pi, &mu, ContextId(0), &[0, 1]).unwrap();
        let est = estimate_cdf(WeightKind::Additive, &pi, &d, &mu, &grid).unwrap();
        for (nu, v) in grid.points().iter().zip(&est.values) {
            assert_eq!(*v, if *nu >= 0.3 { w } else { 0.0 });
        }
    }

    #[test]
    fn empty_dataset_and_short_grid_rejected() {
        let d = toy_dataset(&[]);
        let mu = UniformPolicy::new(d.config());
        let grid = RewardGrid::uniform(d.reward_range(), 11).unwrap();
        assert!(matches!(
            estimate_cdf(WeightKind::Additive, &mu, &d, &mu, &grid),
            Err(Error::EmptyDataset)
        ));
        let d = toy_dataset(&[(0, 0, 0.5)]);
        let short = RewardGrid::uniform(RewardRange::new(0.0, 0.9).unwrap(), 11).unwrap();
        assert!(estimate_cdf(WeightKind::Additive, &mu, &d, &mu, &short).is_err());
    }

    #[test]
    fn nonnegative_weights_give_monotone_estimate() {
        let mut rng = rng_from_seed(9);
        let rows: Vec<(usize, usize, f64)> = (0..300)
            .map(|_| (rng.random_range(0..2), rng.random_range(0..2), rng.random::<f64>()))
            .collect();
        let d = toy_dataset(&rows);
        let mu = UniformPolicy::new(d.config());
        let pi = TablePolicy::random(d.config(), 1, 0.0, &mut rng);
        let grid = RewardGrid::uniform(d.reward_range(), 200).unwrap();
        let est = estimate_cdf(WeightKind::Product, &pi, &d, &mu, &grid).unwrap();
        assert!(est.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn parallel_and_sequential_estimates_agree() {
        let mut rng = rng_from_seed(31);
        let rows: Vec<(usize, usize, f64)> = (0..20_000)
            .map(|_| (rng.random_range(0..2), rng.random_range(0..2), rng.random::<f64>()))
            .collect();
        let d = toy_dataset(&rows);
        let mu = UniformPolicy::new(d.config());
        let pi = TablePolicy::random(d.config(), 1, 0.0, &mut rng);
        let grid = RewardGrid::uniform(d.reward_range(), 300).unwrap();
        let a = estimate_cdf_with(WeightKind::Additive, &pi, &d, &mu, &grid, Execution::Sequential).unwrap();
        let b = estimate_cdf_with(WeightKind::Additive, &pi, &d, &mu, &grid, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn diagnostics_on_policy() {
        let d = toy_dataset(&[(0, 0, 0.1), (1, 0, 0.2), (1, 1, 0.9)]);
        let mu = UniformPolicy::new(d.config());
        let diag = weight_diagnostics(WeightKind::Additive, &mu, &d, &mu).unwrap();
        assert_eq!(diag.mean, 1.0);
        assert_eq!(diag.variance, 0.0);
        assert_eq!(diag.ess, 3.0);
        assert_eq!(diag.fraction_zero, 0.0);
    }

    #[test]
    fn additive_weight_has_mean_one_under_logging() {
        let c = cfg(3, 3);
        let mut rng = rng_from_seed(4);
        let mu = TablePolicy::random(c, 1, 0.05, &mut rng);
        let pi = TablePolicy::random(c, 1, 0.0, &mut rng);
        let mean: f64 = enumerate_slates(c)
            .unwrap()
            .map(|s| {
                crate::policy::slate_prob(&mu, ContextId(0), &s).unwrap()
                    * importance_weight(WeightKind::Additive, &pi, &mu, ContextId(0), &s).unwrap()
            })
            .sum();
        assert!((mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_target_produces_negative_additive_weights() {
        // K = 5, N = 20, uniform logging: G = 1 - K + 20 * (#matches), so
        // exactly the slates with no matching slot get G = 1 - K < 0.
        let c = cfg(5, 20);
        let mu = UniformPolicy::new(c);
        let pi = EpsilonGreedyPolicy::shared(c, 0.0, Slate(vec![0; 5]), 1).unwrap();
        let mut d = LogDataset::new(c, RewardRange::new(0.0, 1.0).unwrap());
        let mut rng = rng_from_seed(2);
        for _ in 0..2000 {
            let s: Vec<usize> = (0..5).map(|_| rng.random_range(0..20)).collect();
            d.push(ContextId(0), &s, 0.5).unwrap();
        }
        let diag = weight_diagnostics(WeightKind::Additive, &pi, &d, &mu).unwrap();
        let w = dataset_weights(WeightKind::Additive, &pi, &mu, &d, Execution::Sequential).unwrap();
        assert!(diag.fraction_negative > 0.0);
        for (i, wi) in w.iter().enumerate() {
            let matches = d.slate(i).iter().filter(|&&a| a == 0).count();
            if matches == 0 {
                assert_eq!(*wi, -4.0);
            } else {
                assert!(*wi > 0.0);
            }
        }
        // P(no match) = 0.95^5
        let expected = 0.95f64.powi(5);
        let sd = (expected * (1.0 - expected) / 2000.0).sqrt();
        assert!((diag.fraction_negative - expected).abs() < 4.0 * sd);
    }
}
