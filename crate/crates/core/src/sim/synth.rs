//! Non-contextual environment whose conditional reward CDF is additive over
//! slots by construction.
//!
//! Each (slot, action) pair owns a normalized [`SigmoidSlice`]; the CDF of a
//! slate is `F(ν|A) = (1/K) Σ_k slice_{k, A^k}(ν)`, i.e. each slot component
//! rises from 0 to `1/K` on `[0, 1]`. Rewards are drawn by inverting `F`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{enumerated_target_cdf, invert_by_bisection, Environment};
use crate::error::Result;
use crate::estimators::RewardGrid;
use crate::metrics::StepCdf;
use crate::policy::FactoredPolicy;
use crate::rng::{rng_from_seed, SimRng};
use crate::slate::{ContextId, RewardRange, SlateConfig};

use super::sigmoid::SigmoidSlice;

pub(crate) const INVERSION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveCdfEnv {
    pub config: SlateConfig,
    pub seed: u64,
    /// `slices[k][a]` for slot `k`, action `a`.
    pub slices: Vec<Vec<SigmoidSlice>>,
}

impl AdditiveCdfEnv {
    /// Draws slopes in `[2, 10]` and centers in `[0.2, 0.8]`, slot by slot.
    pub fn build(config: SlateConfig, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let slices = (0..config.num_slots)
            .map(|_| {
                (0..config.actions_per_slot)
                    .map(|_| SigmoidSlice::draw(&mut rng))
                    .collect()
            })
            .collect();
        Self {
            config,
            seed,
            slices,
        }
    }

    /// Slot component `ψ_{k,a}(ν)`, rising from 0 to `1/K`.
    pub fn component(&self, slot: usize, action: usize, nu: f64) -> f64 {
        self.slices[slot][action].eval(nu) / self.config.num_slots as f64
    }

    pub fn exact_slate_cdf(&self, slate: &[usize], nu: f64) -> f64 {
        let total: f64 = slate
            .iter()
            .enumerate()
            .map(|(k, &a)| self.slices[k][a].eval(nu))
            .sum();
        total / self.config.num_slots as f64
    }

    /// Inverse-CDF draw.
    pub fn sample_reward(&self, slate: &[usize], rng: &mut SimRng) -> f64 {
        let u: f64 = rng.random();
        invert_by_bisection(|nu| self.exact_slate_cdf(slate, nu), u, 0.0, 1.0, INVERSION_TOL)
    }

    /// `F^π(ν) = Σ_A π(A) F(ν|A)` by enumerating slates.
    pub fn exact_target_cdf<P: FactoredPolicy + ?Sized>(&self, target: &P, grid: &RewardGrid) -> Result<StepCdf> {
        enumerated_target_cdf(target, 1, grid, |_, slate, out| {
            for (o, &nu) in out.iter_mut().zip(grid.points()) {
                *o = self.exact_slate_cdf(slate, nu);
            }
        })
    }
}

impl Environment for AdditiveCdfEnv {
    fn config(&self) -> SlateConfig {
        self.config
    }

    fn num_contexts(&self) -> usize {
        1
    }

    fn reward_range(&self) -> RewardRange {
        RewardRange { min: 0.0, max: 1.0 }
    }

    fn sample_context(&self, _rng: &mut SimRng) -> ContextId {
        ContextId(0)
    }

    fn sample_reward(&self, _context: ContextId, slate: &[usize], rng: &mut SimRng) -> f64 {
        AdditiveCdfEnv::sample_reward(self, slate, rng)
    }

    fn target_cdf(&self, target: &dyn FactoredPolicy, grid: &RewardGrid, _seed: u64) -> Result<StepCdf> {
        self.exact_target_cdf(target, grid)
    }
}
