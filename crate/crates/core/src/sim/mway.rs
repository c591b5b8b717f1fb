//! Environment whose reward CDF decomposes over `m`-slot subsets:
//! `F(ν|A) = Σ_{|S| = m} ψ_S(A^S, ν)`, each component rising from 0 to
//! `1 / C(K, m)`. With `m = 1` this is the additive environment, with
//! `m = K` an arbitrary per-slate CDF.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{enumerated_target_cdf, invert_by_bisection, Environment};
use crate::error::{Error, Result};
use crate::estimators::{binomial, RewardGrid};
use crate::metrics::StepCdf;
use crate::policy::FactoredPolicy;
use crate::rng::{rng_from_seed, SimRng};
use crate::slate::{ContextId, RewardRange, SlateConfig};

use super::sigmoid::SigmoidSlice;
use super::synth::INVERSION_TOL;

/// Largest number of component entries `C(K, m) * N^m`.
pub const MWAY_TABLE_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MWayCdfEnv {
    pub config: SlateConfig,
    pub order: usize,
    pub seed: u64,
    /// Slot subsets in lexicographic order.
    pub subsets: Vec<Vec<usize>>,
    /// `tables[s][t]`: component for subset `s` and action tuple `t`
    /// (tuple index in row-major order over the subset's slots).
    pub tables: Vec<Vec<SigmoidSlice>>,
}

fn subsets_of(k: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, m: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            rec(k, m, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, m, 0, &mut Vec::with_capacity(m), &mut out);
    out
}

impl MWayCdfEnv {
    pub fn build(config: SlateConfig, order: usize, seed: u64) -> Result<Self> {
        let k = config.num_slots;
        if order == 0 || order > k {
            return Err(Error::InvalidArgument(format!(
                "interaction order m = {order} must lie in [1, {k}]"
            )));
        }
        let tuples = (config.actions_per_slot as f64).powi(order as i32);
        let entries = binomial(k, order) * tuples;
        if entries > MWAY_TABLE_LIMIT {
            return Err(Error::EnumerationTooLarge {
                size: entries,
                limit: MWAY_TABLE_LIMIT as u64,
            });
        }
        let mut rng = rng_from_seed(seed);
        let subsets = subsets_of(k, order);
        let tables = subsets
            .iter()
            .map(|_| (0..tuples as usize).map(|_| SigmoidSlice::draw(&mut rng)).collect())
            .collect();
        Ok(Self {
            config,
            order,
            seed,
            subsets,
            tables,
        })
    }

    fn tuple_index(&self, subset: &[usize], slate: &[usize]) -> usize {
        subset
            .iter()
            .fold(0, |acc, &slot| acc * self.config.actions_per_slot + slate[slot])
    }

    pub fn exact_mway_cdf(&self, slate: &[usize], nu: f64) -> f64 {
        let total: f64 = self
            .subsets
            .iter()
            .zip(&self.tables)
            .map(|(s, table)| table[self.tuple_index(s, slate)].eval(nu))
            .sum();
        total / self.subsets.len() as f64
    }

    pub fn sample_reward(&self, slate: &[usize], rng: &mut SimRng) -> f64 {
        let u: f64 = rng.random();
        invert_by_bisection(|nu| self.exact_mway_cdf(slate, nu), u, 0.0, 1.0, INVERSION_TOL)
    }

    pub fn exact_target_cdf<P: FactoredPolicy + ?Sized>(&self, target: &P, grid: &RewardGrid) -> Result<StepCdf> {
        enumerated_target_cdf(target, 1, grid, |_, slate, out| {
            for (o, &nu) in out.iter_mut().zip(grid.points()) {
                *o = self.exact_mway_cdf(slate, nu);
            }
        })
    }
}

impl Environment for MWayCdfEnv {
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
        MWayCdfEnv::sample_reward(self, slate, rng)
    }

    fn target_cdf(&self, target: &dyn FactoredPolicy, grid: &RewardGrid, _seed: u64) -> Result<StepCdf> {
        self.exact_target_cdf(target, grid)
    }
}
