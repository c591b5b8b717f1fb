//! Log generation, per-cell estimation and cross-trial aggregation.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::estimators::{estimate_cdf_with, RewardGrid, WeightKind};
use crate::harness::config::{EnvironmentSpec, ExperimentConfig, GreedySpec, PolicySpec, RatingsSource};
use crate::metrics::{cvar, ks_statistic, mean_from_cdf, median, monotone_repair, quantile, standard_error, StepCdf};
use crate::par::{self, Execution};
use crate::policy::{sample_slate, EpsilonGreedyPolicy, FactoredPolicy, UniformPolicy};
use crate::rng::{derive_seed, rng_from_seed};
use crate::sim::ratings::{ingest_movielens_csv, IngestOptions};
use crate::sim::{
    fit_ease, synthetic_ratings, AdditiveCdfEnv, InteractionEnv, MWayCdfEnv, RatingsSlateEnv, SimulatorParams,
};
use crate::slate::{ContextId, LogDataset, Slate, SlateConfig};

/// Point metrics read off a (repaired) CDF.
pub const POINT_METRICS: [&str; 4] = ["mean", "median", "var", "cvar"];

/// Seed-path tag for the ground-truth stream, disjoint from cell indices.
const GROUND_TRUTH_TAG: u64 = u64::MAX;

/// Draws `n` i.i.d. `(context, slate, reward)` tuples under `logging`.
pub fn generate_log<E, L>(env: &E, logging: &L, n: usize, seed: u64) -> Result<LogDataset>
where
    E: Environment + ?Sized,
    L: FactoredPolicy + ?Sized,
{
    if n == 0 {
        return Err(Error::InvalidArgument("log size must be >= 1".into()));
    }
    if logging.config() != env.config() {
        return Err(Error::InvalidPolicy(format!(
            "logging policy is for {:?}, environment is {:?}",
            logging.config(),
            env.config()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut log = LogDataset::with_capacity(env.config(), env.reward_range(), n);
    for _ in 0..n {
        let x = env.sample_context(&mut rng);
        let slate = sample_slate(logging, x, &mut rng);
        let r = env.sample_reward(x, &slate, &mut rng);
        log.push(x, &slate, r)?;
    }
    Ok(log)
}

/// Builds the environment described by `spec`.
pub fn build_environment(spec: &EnvironmentSpec) -> Result<Box<dyn Environment>> {
    Ok(match spec {
        EnvironmentSpec::Synth {
            num_slots,
            actions_per_slot,
            seed,
        } => Box::new(AdditiveCdfEnv::build(SlateConfig::new(*num_slots, *actions_per_slot)?, *seed)),
        EnvironmentSpec::Mway {
            num_slots,
            actions_per_slot,
            order,
            seed,
        } => Box::new(MWayCdfEnv::build(
            SlateConfig::new(*num_slots, *actions_per_slot)?,
            *order,
            *seed,
        )?),
        EnvironmentSpec::Interaction {
            num_slots,
            actions_per_slot,
            pairwise_strength,
            gamma,
            noise,
            seed,
        } => Box::new(InteractionEnv::build(
            SlateConfig::new(*num_slots, *actions_per_slot)?,
            *pairwise_strength,
            *gamma,
            *noise,
            *seed,
        )?),
        EnvironmentSpec::Ratings {
            source,
            lambda,
            max_items,
            min_history,
            max_history,
            top_n,
            num_slots,
            ground_truth_draws,
        } => {
            let ratings = match source {
                RatingsSource::Synthetic { users, items, seed } => synthetic_ratings(*users, *items, *seed)?,
                RatingsSource::Movielens {
                    path,
                    rating_threshold,
                    delimiter,
                } => {
                    let delimiter = u8::try_from(*delimiter)
                        .map_err(|_| Error::InvalidConfig(format!("delimiter '{delimiter}' is not one byte")))?;
                    let opts = IngestOptions {
                        rating_threshold: *rating_threshold,
                        delimiter,
                    };
                    ingest_movielens_csv(path, opts)?.0
                }
            };
            let ratings = if ratings.num_items > *max_items {
                ratings.keep_top_items(*max_items)?
            } else {
                ratings
            };
            let model = fit_ease(&ratings, *lambda)?;
            let params = SimulatorParams {
                min_history: *min_history,
                max_history: *max_history,
                top_n: *top_n,
                num_slots: *num_slots,
            };
            Box::new(RatingsSlateEnv::build(&ratings, &model, params)?.with_ground_truth_draws(*ground_truth_draws)?)
        }
    })
}

/// Builds a policy for `env`.
pub fn build_policy(spec: &PolicySpec, env: &dyn Environment) -> Result<Box<dyn FactoredPolicy>> {
    let config = env.config();
    Ok(match spec {
        PolicySpec::Uniform => Box::new(UniformPolicy::new(config)),
        PolicySpec::EpsilonGreedy { epsilon, greedy } => {
            let slates = match greedy {
                GreedySpec::Random { seed } => {
                    let mut rng = rng_from_seed(*seed);
                    let slate = Slate(
                        (0..config.num_slots)
                            .map(|_| rng.random_range(0..config.actions_per_slot))
                            .collect(),
                    );
                    vec![slate; env.num_contexts()]
                }
                GreedySpec::Env => (0..env.num_contexts())
                    .map(|x| {
                        env.preferred_slate(ContextId(x)).ok_or_else(|| {
                            Error::InvalidConfig("environment has no preferred slate; use a random greedy slate".into())
                        })
                    })
                    .collect::<Result<_>>()?,
            };
            Box::new(EpsilonGreedyPolicy::new(config, *epsilon, slates)?)
        }
    })
}

/// Metric values of the ground-truth CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mean: f64,
    pub median: f64,
    pub var: f64,
    pub cvar: f64,
}

impl GroundTruth {
    fn get(&self, metric: &str) -> f64 {
        match metric {
            "mean" => self.mean,
            "median" => self.median,
            "var" => self.var,
            _ => self.cvar,
        }
    }
}

/// Every slot action the target can choose must be possible under logging.
fn check_common_support(env: &dyn Environment, logging: &dyn FactoredPolicy, target: &dyn FactoredPolicy) -> Result<()> {
    let cfg = env.config();
    for x in 0..env.num_contexts() {
        let context = ContextId(x);
        for slot in 0..cfg.num_slots {
            for action in 0..cfg.actions_per_slot {
                if target.slot_prob(context, slot, action) > 0.0 && logging.slot_prob(context, slot, action) <= 0.0 {
                    return Err(Error::SupportViolation { context: x, slot, action });
                }
            }
        }
    }
    Ok(())
}

/// Everything shared by the cells of one experiment.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub env: Box<dyn Environment>,
    pub logging: Box<dyn FactoredPolicy>,
    pub target: Box<dyn FactoredPolicy>,
    pub grid: RewardGrid,
    pub truth: StepCdf,
    pub truth_metrics: GroundTruth,
}

fn point_metrics(cdf: &StepCdf, alpha: f64) -> Result<[f64; 4]> {
    let c = cdf.completed();
    Ok([mean_from_cdf(&c).value, median(&c)?, quantile(&c, alpha)?, cvar(&c, alpha)?])
}

impl Experiment {
    /// Builds the environment and policies and computes the ground truth.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let env = build_environment(&config.environment)?;
        let logging = build_policy(&config.logging, env.as_ref())?;
        let target = build_policy(&config.target, env.as_ref())?;
        check_common_support(env.as_ref(), logging.as_ref(), target.as_ref())?;
        let k = env.config().num_slots;
        for kind in &config.estimators {
            if let WeightKind::Subsets(m) | WeightKind::Centered(m) = kind {
                if *m == 0 || *m > k {
                    return Err(Error::InvalidConfig(format!("estimator {kind} needs 1 <= m <= K = {k}")));
                }
            }
        }
        let grid = RewardGrid::uniform(env.reward_range(), config.grid_size)?;
        let truth = env.target_cdf(target.as_ref(), &grid, derive_seed(config.master_seed, &[GROUND_TRUTH_TAG]))?;
        let [mean, median, var, cvar] = point_metrics(&truth, config.alpha)?;
        Ok(Self {
            config: config.clone(),
            env,
            logging,
            target,
            grid,
            truth,
            truth_metrics: GroundTruth { mean, median, var, cvar },
        })
    }

    /// Seed of cell `(trial, size_index)`.
    pub fn cell_seed(&self, trial: usize, size_index: usize) -> u64 {
        derive_seed(self.config.master_seed, &[trial as u64, size_index as u64])
    }

    /// Runs one cell: one log shared by every configured estimator.
    pub fn run_cell(&self, trial: usize, size_index: usize, exec: Execution) -> Result<Vec<EstimatorOutcome>> {
        let n = self.config.sample_sizes[size_index];
        let log = generate_log(self.env.as_ref(), self.logging.as_ref(), n, self.cell_seed(trial, size_index))?;
        self.config
            .estimators
            .iter()
            .map(|&kind| {
                let raw = estimate_cdf_with(kind, self.target.as_ref(), &log, self.logging.as_ref(), &self.grid, exec)?;
                let repaired = monotone_repair(&raw);
                let ks = ks_statistic(&repaired, &self.truth)?;
                let points = point_metrics(&repaired, self.config.alpha)?;
                Ok(EstimatorOutcome {
                    estimator: kind,
                    ks,
                    points,
                    ess: raw.diagnostics.ess,
                })
            })
            .collect()
    }
}

/// Metrics of one estimator in one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOutcome {
    pub estimator: WeightKind,
    pub ks: f64,
    /// Values of [`POINT_METRICS`], in order.
    pub points: [f64; 4],
    pub ess: f64,
}

/// A failed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub trial: usize,
    pub n: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: String,
    pub n: usize,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub ground_truth: GroundTruth,
    pub errors: Vec<CellError>,
}

impl ResultTable {
    /// Row for `(estimator, n, metric)`.
    pub fn get(&self, estimator: &str, n: usize, metric: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.n == n && r.metric == metric)
    }

    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty()
    }
}

/// Runs every `(trial, sample size)` cell and aggregates per estimator,
/// sample size and metric. Cells run in parallel under
/// [`Execution::Parallel`]; results do not depend on the execution mode.
pub fn run_experiment(config: &ExperimentConfig, exec: Execution) -> Result<ResultTable> {
    let experiment = Experiment::prepare(config)?;
    Ok(experiment.run(exec))
}

impl Experiment {
    pub fn run(&self, exec: Execution) -> ResultTable {
        let sizes = self.config.sample_sizes.len();
        let cells = self.config.trials * sizes;
        let outcomes = par::map_indexed(exec, cells, |c| {
            let (trial, s) = (c / sizes, c % sizes);
            self.run_cell(trial, s, Execution::Sequential)
        });
        self.aggregate(&outcomes)
    }

    /// Reduces cell outcomes, indexed `trial * sizes + size_index`.
    pub fn aggregate(&self, outcomes: &[Result<Vec<EstimatorOutcome>>]) -> ResultTable {
        let sizes = &self.config.sample_sizes;
        let mut errors = Vec::new();
        // (estimator index, size index) -> per-trial outcomes in trial order
        let mut per: BTreeMap<(usize, usize), Vec<EstimatorOutcome>> = BTreeMap::new();
        for (c, outcome) in outcomes.iter().enumerate() {
            let (trial, s) = (c / sizes.len(), c % sizes.len());
            match outcome {
                Ok(list) => {
                    for (e, o) in list.iter().enumerate() {
                        per.entry((e, s)).or_default().push(*o);
                    }
                }
                Err(err) => errors.push(CellError {
                    trial,
                    n: sizes[s],
                    message: err.to_string(),
                }),
            }
        }
        let mut rows = Vec::new();
        for (e, kind) in self.config.estimators.iter().enumerate() {
            for (s, &n) in sizes.iter().enumerate() {
                let name = kind.to_string();
                let failed = errors.iter().filter(|x| x.n == n).count();
                let trials = per.get(&(e, s)).map(Vec::as_slice).unwrap_or(&[]);
                let mut push = |metric: String, values: Vec<f64>| {
                    if values.is_empty() {
                        return;
                    }
                    let mean = values.iter().sum::<f64>() / values.len() as f64;
                    rows.push(ResultRow {
                        estimator: name.clone(),
                        n,
                        metric,
                        mean,
                        stderr: standard_error(&values, mean),
                        trials: values.len(),
                    });
                };
                push("ks".into(), trials.iter().map(|o| o.ks).collect());
                for (i, metric) in POINT_METRICS.iter().enumerate() {
                    push(metric.to_string(), trials.iter().map(|o| o.points[i]).collect());
                }
                for (i, metric) in POINT_METRICS.iter().enumerate() {
                    let truth = self.truth_metrics.get(metric);
                    push(
                        format!("{metric}_sq_err"),
                        trials.iter().map(|o| (o.points[i] - truth).powi(2)).collect(),
                    );
                }
                push("ess".into(), trials.iter().map(|o| o.ess).collect());
                if failed > 0 {
                    rows.push(ResultRow {
                        estimator: name.clone(),
                        n,
                        metric: "error_count".into(),
                        mean: failed as f64,
                        stderr: f64::NAN,
                        trials: failed,
                    });
                }
            }
        }
        ResultTable {
            rows,
            ground_truth: self.truth_metrics.clone(),
            errors,
        }
    }
}
