//! Off-policy estimation of reward distributions for slate recommendation.
//!
//! Logged slates are reweighted with per-slot importance ratios to estimate
//! the reward CDF a target policy would produce, and risk functionals
//! (mean, variance, quantiles, CVaR) are read off the estimated CDF.

pub mod env;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod metrics;
pub mod par;
pub mod policy;
pub mod rng;
pub mod sim;
pub mod slate;

pub use error::{Error, Result};
pub use estimators::{estimate_cdf, CdfEstimate, RewardGrid, WeightKind};
pub use metrics::{monotone_repair, StepCdf};
pub use par::Execution;
pub use policy::{EpsilonGreedyPolicy, FactoredPolicy, TablePolicy, UniformPolicy};
pub use slate::{ContextId, LogDataset, RewardRange, Slate, SlateConfig};
