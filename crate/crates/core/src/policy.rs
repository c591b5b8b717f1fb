//! Factored slate policies.
//!
//! A factored policy assigns each slot an independent categorical
//! distribution over the `N` candidates, conditional on the context. The
//! probability of a slate is the product of its slot probabilities. Both the
//! logging and the target policy implement [`FactoredPolicy`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::slate::{ContextId, Slate, SlateConfig};

/// Tolerance on per-slot normalization.
pub const NORMALIZATION_TOL: f64 = 1e-9;

pub trait FactoredPolicy: Send + Sync {
    fn config(&self) -> SlateConfig;

    /// Probability of `action` in `slot` given `context`.
    fn slot_prob(&self, context: ContextId, slot: usize, action: usize) -> f64;

    /// Draws one slot action. The default walks the slot distribution.
    fn sample_action(&self, context: ContextId, slot: usize, rng: &mut SimRng) -> usize {
        let n = self.config().actions_per_slot;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for a in 0..n {
            acc += self.slot_prob(context, slot, a);
            if u < acc {
                return a;
            }
        }
        // Rounding left a sliver of mass; give it to the last supported action.
        (0..n)
            .rev()
            .find(|&a| self.slot_prob(context, slot, a) > 0.0)
            .unwrap_or(n - 1)
    }
}

/// Product of slot probabilities for `slate`.
pub fn slate_prob<P: FactoredPolicy + ?Sized>(
    policy: &P,
    context: ContextId,
    slate: &[usize],
) -> Result<f64> {
    policy.config().validate(slate)?;
    Ok(slate
        .iter()
        .enumerate()
        .map(|(k, &a)| policy.slot_prob(context, k, a))
        .product())
}

/// Draws a slate with independent per-slot draws.
pub fn sample_slate<P: FactoredPolicy + ?Sized>(
    policy: &P,
    context: ContextId,
    rng: &mut SimRng,
) -> Slate {
    let k = policy.config().num_slots;
    Slate((0..k).map(|slot| policy.sample_action(context, slot, rng)).collect())
}

/// Checks that every slot distribution of `policy` sums to one for each of
/// the given contexts.
pub fn check_normalized<P: FactoredPolicy + ?Sized>(policy: &P, num_contexts: usize) -> Result<()> {
    let c = policy.config();
    for x in 0..num_contexts {
        for k in 0..c.num_slots {
            let mut total = 0.0;
            for a in 0..c.actions_per_slot {
                let p = policy.slot_prob(ContextId(x), k, a);
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidPolicy(format!(
                        "probability {p} for context {x}, slot {k}, action {a}"
                    )));
                }
                total += p;
            }
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "slot {k} of context {x} sums to {total}"
                )));
            }
        }
    }
    Ok(())
}

/// Uniform over the candidates in every slot, for every context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformPolicy {
    config: SlateConfig,
}

impl UniformPolicy {
    pub fn new(config: SlateConfig) -> Self {
        Self { config }
    }
}

impl FactoredPolicy for UniformPolicy {
    fn config(&self) -> SlateConfig {
        self.config
    }

    fn slot_prob(&self, _context: ContextId, _slot: usize, _action: usize) -> f64 {
        1.0 / self.config.actions_per_slot as f64
    }

    fn sample_action(&self, _context: ContextId, _slot: usize, rng: &mut SimRng) -> usize {
        rng.random_range(0..self.config.actions_per_slot)
    }
}

/// Per slot: mass `epsilon` on every candidate plus `1 - N * epsilon` extra
/// on the context's greedy action. `epsilon = 0` is deterministic,
/// `epsilon = 1/N` is uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonGreedyPolicy {
    config: SlateConfig,
    epsilon: f64,
    greedy: Vec<Slate>,
    /// `1 - N * epsilon`, snapped to zero when within rounding of it.
    greedy_extra: f64,
}

impl EpsilonGreedyPolicy {
    /// `greedy[x]` is the greedy slate for context `x`.
    pub fn new(config: SlateConfig, epsilon: f64, greedy: Vec<Slate>) -> Result<Self> {
        let n = config.actions_per_slot as f64;
        if !(epsilon >= 0.0 && epsilon * n <= 1.0 + 1e-12) {
            return Err(Error::InvalidPolicy(format!(
                "epsilon {epsilon} outside [0, 1/N] for N = {}",
                config.actions_per_slot
            )));
        }
        if greedy.is_empty() {
            return Err(Error::InvalidPolicy("no greedy slates".into()));
        }
        for s in &greedy {
            config.validate(s)?;
        }
        let mut greedy_extra = 1.0 - n * epsilon;
        if greedy_extra.abs() <= 4.0 * f64::EPSILON {
            greedy_extra = 0.0;
        }
        Ok(Self {
            config,
            epsilon,
            greedy,
            greedy_extra,
        })
    }

    /// Same greedy slate for every one of `num_contexts` contexts.
    pub fn shared(config: SlateConfig, epsilon: f64, greedy: Slate, num_contexts: usize) -> Result<Self> {
        Self::new(config, epsilon, vec![greedy; num_contexts.max(1)])
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn greedy_slate(&self, context: ContextId) -> &Slate {
        &self.greedy[context.0]
    }

    pub fn num_contexts(&self) -> usize {
        self.greedy.len()
    }
}

impl FactoredPolicy for EpsilonGreedyPolicy {
    fn config(&self) -> SlateConfig {
        self.config
    }

    fn slot_prob(&self, context: ContextId, slot: usize, action: usize) -> f64 {
        if self.greedy[context.0][slot] == action {
            self.epsilon + self.greedy_extra
        } else {
            self.epsilon
        }
    }

    fn sample_action(&self, context: ContextId, slot: usize, rng: &mut SimRng) -> usize {
        let n = self.config.actions_per_slot;
        let explore = self.epsilon * n as f64;
        if explore > 0.0 && rng.random::<f64>() < explore {
            rng.random_range(0..n)
        } else {
            self.greedy[context.0][slot]
        }
    }
}

/// Explicit probability table indexed `[context][slot][action]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePolicy {
    config: SlateConfig,
    probs: Vec<Vec<Vec<f64>>>,
}

impl TablePolicy {
    pub fn new(config: SlateConfig, probs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPolicy("no contexts".into()));
        }
        for (x, slots) in probs.iter().enumerate() {
            if slots.len() != config.num_slots
                || slots.iter().any(|p| p.len() != config.actions_per_slot)
            {
                return Err(Error::InvalidPolicy(format!(
                    "table for context {x} does not match K = {}, N = {}",
                    config.num_slots, config.actions_per_slot
                )));
            }
        }
        let policy = Self { config, probs };
        check_normalized(&policy, policy.probs.len())?;
        Ok(policy)
    }

    /// Random strictly positive table: each slot distribution is a normalized
    /// vector of `Uniform(floor, 1)` draws.
    pub fn random(config: SlateConfig, num_contexts: usize, floor: f64, rng: &mut SimRng) -> Self {
        let probs = (0..num_contexts)
            .map(|_| {
                (0..config.num_slots)
                    .map(|_| {
                        let raw: Vec<f64> = (0..config.actions_per_slot)
                            .map(|_| rng.random_range(floor..1.0))
                            .collect();
                        let total: f64 = raw.iter().sum();
                        raw.into_iter().map(|p| p / total).collect()
                    })
                    .collect()
            })
            .collect();
        Self { config, probs }
    }

    pub fn num_contexts(&self) -> usize {
        self.probs.len()
    }
}

impl FactoredPolicy for TablePolicy {
    fn config(&self) -> SlateConfig {
        self.config
    }

    fn slot_prob(&self, context: ContextId, slot: usize, action: usize) -> f64 {
        self.probs[context.0][slot][action]
    }
}
