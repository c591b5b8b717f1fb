//! Environment with pairwise slot interactions and a position cascade.
//!
//! `E[R|A] = Σ_k γ^k θ_k(A^k) + Σ_{j<k} θ_{jk}(A^j, A^k)` with 0-based `k`.
//! Observed rewards add zero-mean Gaussian noise truncated at
//! `±NOISE_TRUNCATION·σ`. The declared range is widened by the same margin,
//! so rewards are never clipped and `E[R|A]` is exactly the mean above.
//! Any nonzero pairwise table breaks additivity over single slots, both of
//! the mean and of the CDF.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{enumerated_target_cdf, normal_cdf, Environment};
use crate::error::{Error, Result};
use crate::estimators::RewardGrid;
use crate::metrics::StepCdf;
use crate::policy::FactoredPolicy;
use crate::rng::{rng_from_seed, SimRng};
use crate::slate::{enumerate_slates, ContextId, RewardRange, Slate, SlateConfig};

/// Noise is truncated at this many standard deviations.
pub const NOISE_TRUNCATION: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEnv {
    pub config: SlateConfig,
    pub seed: u64,
    pub gamma: f64,
    pub noise: f64,
    pub pairwise_strength: f64,
    /// `base[k][a]`.
    pub base: Vec<Vec<f64>>,
    /// One `N x N` table per slot pair `(j, k)`, `j < k`, in lexicographic
    /// pair order; entry `[a_j * N + a_k]`.
    pub pairwise: Vec<Vec<f64>>,
    pub range: RewardRange,
}

impl InteractionEnv {
    pub fn build(
        config: SlateConfig,
        pairwise_strength: f64,
        gamma: f64,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(pairwise_strength >= 0.0 && pairwise_strength.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "pairwise_strength = {pairwise_strength} must be >= 0"
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} must lie in (0, 1]")));
        }
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise = {noise} must be >= 0")));
        }
        let (k, n) = (config.num_slots, config.actions_per_slot);
        let mut rng = rng_from_seed(seed);
        let base: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
            .collect();
        let pairs = k * (k - 1) / 2;
        let pairwise: Vec<Vec<f64>> = (0..pairs)
            .map(|_| {
                (0..n * n)
                    .map(|_| pairwise_strength * rng.random::<f64>())
                    .collect()
            })
            .collect();
        let upper: f64 = (0..k).map(|i| gamma.powi(i as i32)).sum::<f64>()
            + pairs as f64 * pairwise_strength;
        let margin = NOISE_TRUNCATION * noise;
        Ok(Self {
            config,
            seed,
            gamma,
            noise,
            pairwise_strength,
            base,
            pairwise,
            range: RewardRange::new(-margin, upper + margin)?,
        })
    }

    pub fn expected_reward(&self, slate: &[usize]) -> f64 {
        let n = self.config.actions_per_slot;
        let mut total = 0.0;
        let mut discount = 1.0;
        for (k, &a) in slate.iter().enumerate() {
            total += discount * self.base[k][a];
            discount *= self.gamma;
        }
        let mut pair = 0;
        for j in 0..slate.len() {
            for k in j + 1..slate.len() {
                total += self.pairwise[pair][slate[j] * n + slate[k]];
                pair += 1;
            }
        }
        total
    }

    pub fn sample_reward(&self, slate: &[usize], rng: &mut SimRng) -> f64 {
        let mean = self.expected_reward(slate);
        if self.noise == 0.0 {
            return mean;
        }
        let z = loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= NOISE_TRUNCATION {
                break z;
            }
        };
        // Guards against rounding at the range edges only.
        (mean + self.noise * z).clamp(self.range.min, self.range.max)
    }

    /// `P(R ≤ ν | A)` for the truncated Gaussian reward.
    pub fn exact_slate_cdf(&self, slate: &[usize], nu: f64) -> f64 {
        if nu < self.range.min {
            return 0.0;
        }
        if nu >= self.range.max {
            return 1.0;
        }
        let mean = self.expected_reward(slate);
        if self.noise == 0.0 {
            if mean <= nu {
                1.0
            } else {
                0.0
            }
        } else {
            let z = (nu - mean) / self.noise;
            if z <= -NOISE_TRUNCATION {
                return 0.0;
            }
            if z >= NOISE_TRUNCATION {
                return 1.0;
            }
            let lo = normal_cdf(-NOISE_TRUNCATION);
            ((normal_cdf(z) - lo) / (normal_cdf(NOISE_TRUNCATION) - lo)).clamp(0.0, 1.0)
        }
    }

    /// Slate with the highest expected reward (lexicographically first on ties).
    pub fn best_slate(&self) -> Result<Slate> {
        let mut best: Option<(f64, Slate)> = None;
        for s in enumerate_slates(self.config)? {
            let v = self.expected_reward(&s);
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, s));
            }
        }
        Ok(best.expect("slate space is non-empty").1)
    }

    pub fn exact_target_cdf<P: FactoredPolicy + ?Sized>(&self, target: &P, grid: &RewardGrid) -> Result<StepCdf> {
        enumerated_target_cdf(target, 1, grid, |_, slate, out| {
            for (o, &nu) in out.iter_mut().zip(grid.points()) {
                *o = self.exact_slate_cdf(slate, nu);
            }
        })
    }

    /// Exact target mean `Σ_A π(A) E[R|A]`.
    pub fn target_mean<P: FactoredPolicy + ?Sized>(&self, target: &P) -> f64 {
        let mut total = 0.0;
        crate::env::for_each_supported_slate(target, ContextId(0), |s, p| {
            total += p * self.expected_reward(s);
        });
        total
    }
}

impl Environment for InteractionEnv {
    fn config(&self) -> SlateConfig {
        self.config
    }

    fn num_contexts(&self) -> usize {
        1
    }

    fn reward_range(&self) -> RewardRange {
        self.range
    }

    fn sample_context(&self, _rng: &mut SimRng) -> ContextId {
        ContextId(0)
    }

    fn sample_reward(&self, _context: ContextId, slate: &[usize], rng: &mut SimRng) -> f64 {
        InteractionEnv::sample_reward(self, slate, rng)
    }

    fn preferred_slate(&self, _context: ContextId) -> Option<Slate> {
        self.best_slate().ok()
    }

    fn target_cdf(&self, target: &dyn FactoredPolicy, grid: &RewardGrid, _seed: u64) -> Result<StepCdf> {
        self.exact_target_cdf(target, grid)
    }

    fn expected_reward(&self, _context: ContextId, slate: &[usize]) -> Option<f64> {
        Some(InteractionEnv::expected_reward(self, slate))
    }
}
