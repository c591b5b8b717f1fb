//! Experiment configuration: JSON schema, presets and dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::estimators::{WeightKind, DEFAULT_GRID_SIZE};

pub const SCHEMA_VERSION: u32 = 1;

/// Named configurations shipped with the crate.
pub const PRESETS: &[(&str, &str)] = &[
    ("table1a", include_str!("../../presets/table1a.json")),
    ("movielens-desk", include_str!("../../presets/movielens-desk.json")),
    ("interaction-table3", include_str!("../../presets/interaction-table3.json")),
    ("mway-corollary", include_str!("../../presets/mway-corollary.json")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub environment: EnvironmentSpec,
    pub logging: PolicySpec,
    pub target: PolicySpec,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    pub estimators: Vec<WeightKind>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

fn default_alpha() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// Additive sigmoid-slice CDF environment.
    Synth {
        num_slots: usize,
        actions_per_slot: usize,
        seed: u64,
    },
    /// `m`-way sigmoid-slice CDF environment.
    Mway {
        num_slots: usize,
        actions_per_slot: usize,
        order: usize,
        seed: u64,
    },
    /// Cascade-decayed pairwise interaction environment.
    Interaction {
        num_slots: usize,
        actions_per_slot: usize,
        pairwise_strength: f64,
        gamma: f64,
        noise: f64,
        seed: u64,
    },
    /// nDCG simulator over a ratings matrix.
    Ratings {
        source: RatingsSource,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_max_items")]
        max_items: usize,
        #[serde(default = "default_min_history")]
        min_history: usize,
        #[serde(default = "default_max_history")]
        max_history: usize,
        #[serde(default = "default_top_n")]
        top_n: usize,
        #[serde(default = "default_num_slots")]
        num_slots: usize,
        /// Monte-Carlo draws for the ground truth when enumeration is too big.
        #[serde(default = "default_draws")]
        ground_truth_draws: usize,
    },
}

fn default_lambda() -> f64 {
    100.0
}
fn default_max_items() -> usize {
    crate::sim::ratings::EASE_ITEM_LIMIT
}
fn default_min_history() -> usize {
    10
}
fn default_max_history() -> usize {
    15
}
fn default_top_n() -> usize {
    20
}
fn default_num_slots() -> usize {
    5
}
fn default_draws() -> usize {
    crate::sim::ratings::DEFAULT_GROUND_TRUTH_DRAWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RatingsSource {
    Synthetic { users: usize, items: usize, seed: u64 },
    Movielens {
        path: PathBuf,
        #[serde(default = "default_threshold")]
        rating_threshold: f64,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
}

fn default_threshold() -> f64 {
    4.0
}
fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Uniform,
    /// `epsilon = 0` gives a deterministic policy.
    EpsilonGreedy { epsilon: f64, greedy: GreedySpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GreedySpec {
    /// One slate drawn uniformly at random, shared by every context.
    Random { seed: u64 },
    /// The environment's preferred slate for each context.
    Env,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                Error::InvalidConfig(format!("unknown preset '{name}' (have {})", names.join(", ")))
            })?;
        Self::from_json(text)
    }

    /// Loads a preset by name or a config file by path.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if PRESETS.iter().any(|(n, _)| *n == name_or_path) {
            Self::preset(name_or_path)
        } else {
            Self::from_file(name_or_path)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return bad("sample_sizes must be non-empty and positive".into());
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("sample_sizes must be strictly ascending: {:?}", self.sample_sizes));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.grid_size < 2 {
            return bad(format!("grid_size = {} must be >= 2", self.grid_size));
        }
        if self.estimators.is_empty() {
            return bad("estimators must be non-empty".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        Ok(())
    }

    /// Applies `path=value` overrides, e.g. `trials=10` or
    /// `environment.seed=3`. Values parse as JSON, falling back to a string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut tree = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("override '{o}' is not path=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut tree, path, value)?;
        }
        let config: Self = serde_json::from_value(tree)?;
        config.validate()?;
        Ok(config)
    }
}

fn set_path(tree: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) if last => {
                map.insert(part.to_string(), value);
                return Ok(());
            }
            Value::Object(map) => map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default())),
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("'{part}' in '{path}' is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::InvalidArgument(format!("index {idx} out of bounds ({len}) in '{path}'")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::InvalidArgument(format!("'{path}' does not name a config field"))),
        };
    }
    Ok(())
}
