//! Sampling interface shared by the simulators, plus exact-CDF helpers.

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::RewardGrid;
use crate::metrics::StepCdf;
use crate::policy::FactoredPolicy;
use crate::rng::SimRng;
use crate::slate::{ContextId, RewardRange, Slate, SlateConfig};

/// A slate environment: draws contexts and rewards, and knows the exact (or
/// simulated) reward CDF of any factored target policy.
pub trait Environment: Send + Sync {
    fn config(&self) -> SlateConfig;

    fn num_contexts(&self) -> usize;

    fn reward_range(&self) -> RewardRange;

    /// Contexts are uniform over the context table unless overridden.
    fn sample_context(&self, rng: &mut SimRng) -> ContextId {
        ContextId(rng.random_range(0..self.num_contexts()))
    }

    fn sample_reward(&self, context: ContextId, slate: &[usize], rng: &mut SimRng) -> f64;

    /// The environment's natural greedy slate for a context, if it has one.
    fn preferred_slate(&self, _context: ContextId) -> Option<Slate> {
        None
    }

    /// Ground-truth reward CDF of `target` on `grid`. `seed` is used only by
    /// environments that fall back to simulation.
    fn target_cdf(&self, target: &dyn FactoredPolicy, grid: &RewardGrid, seed: u64) -> Result<StepCdf>;

    /// Exact `E[R | context, slate]` when the environment can compute it.
    fn expected_reward(&self, _context: ContextId, _slate: &[usize]) -> Option<f64> {
        None
    }
}

/// Calls `visit(slate, prob)` for every slate with positive probability
/// under `policy`, in lexicographic order.
pub fn for_each_supported_slate<P, F>(policy: &P, context: ContextId, mut visit: F)
where
    P: FactoredPolicy + ?Sized,
    F: FnMut(&[usize], f64),
{
    let config = policy.config();
    let table: Vec<Vec<(usize, f64)>> = (0..config.num_slots)
        .map(|k| {
            (0..config.actions_per_slot)
                .map(|a| (a, policy.slot_prob(context, k, a)))
                .filter(|&(_, p)| p > 0.0)
                .collect()
        })
        .collect();
    let mut slate = vec![0; config.num_slots];
    walk(&table, 0, 1.0, &mut slate, &mut visit);

    fn walk<F: FnMut(&[usize], f64)>(
        table: &[Vec<(usize, f64)>],
        slot: usize,
        prob: f64,
        slate: &mut Vec<usize>,
        visit: &mut F,
    ) {
        if slot == table.len() {
            visit(slate, prob);
            return;
        }
        for &(a, p) in &table[slot] {
            slate[slot] = a;
            walk(table, slot + 1, prob * p, slate, visit);
        }
    }
}

/// `Σ_x d(x) Σ_A π(A|x) F(ν | x, A)` at every grid point, by enumeration.
/// Contexts are weighted uniformly. `slate_cdf` fills the conditional CDF of
/// one slate on the grid.
pub fn enumerated_target_cdf<P, F>(
    policy: &P,
    num_contexts: usize,
    grid: &RewardGrid,
    mut slate_cdf: F,
) -> Result<StepCdf>
where
    P: FactoredPolicy + ?Sized,
    F: FnMut(ContextId, &[usize], &mut [f64]),
{
    policy.config().check_enumerable()?;
    let mut total = vec![0.0; grid.len()];
    let mut buf = vec![0.0; grid.len()];
    let w = 1.0 / num_contexts as f64;
    for x in 0..num_contexts {
        for_each_supported_slate(policy, ContextId(x), |slate, p| {
            slate_cdf(ContextId(x), slate, &mut buf);
            for (t, f) in total.iter_mut().zip(&buf) {
                *t += w * p * f;
            }
        });
    }
    normalized_cdf(grid, total)
}

/// Clamps accumulated mixture values into a valid CDF, absorbing rounding
/// noise at the top.
pub(crate) fn normalized_cdf(grid: &RewardGrid, mut values: Vec<f64>) -> Result<StepCdf> {
    let mut running = 0.0f64;
    for v in values.iter_mut() {
        running = running.max(v.clamp(0.0, 1.0));
        *v = running;
    }
    let last = values.len() - 1;
    if (values[last] - 1.0).abs() > 1e-6 {
        return Err(Error::Numerical(format!(
            "exact CDF ends at {} instead of 1",
            values[last]
        )));
    }
    values[last] = 1.0;
    StepCdf::new(grid.clone(), values)
}

/// Solves `cdf(ν) = u` on `[lo, hi]` by bisection to absolute tolerance `tol`.
pub fn invert_by_bisection<F: Fn(f64) -> f64>(cdf: F, u: f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if cdf(mid) < u {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Empirical CDF of `samples` on `grid` (values in `[0, 1]`).
pub fn empirical_cdf(samples: &[f64], grid: &RewardGrid) -> Result<StepCdf> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = vec![0usize; grid.len() + 1];
    for &r in samples {
        counts[grid.bin_index(r)] += 1;
    }
    let n = samples.len() as f64;
    let mut acc = 0usize;
    let values = counts[..grid.len()]
        .iter()
        .map(|c| {
            acc += c;
            acc as f64 / n
        })
        .collect();
    StepCdf::with_partial_mass(grid.clone(), values)
}

/// Standard normal CDF.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{EpsilonGreedyPolicy, UniformPolicy};

    #[test]
    fn supported_slates_skip_zero_mass() {
        let c = SlateConfig::new(3, 4).unwrap();
        let det = EpsilonGreedyPolicy::shared(c, 0.0, Slate(vec![1, 2, 3]), 1).unwrap();
        let mut seen = Vec::new();
        for_each_supported_slate(&det, ContextId(0), |s, p| seen.push((s.to_vec(), p)));
        assert_eq!(seen, vec![(vec![1, 2, 3], 1.0)]);

        let mut count = 0;
        let mut total = 0.0;
        for_each_supported_slate(&UniformPolicy::new(c), ContextId(0), |_, p| {
            count += 1;
            total += p;
        });
        assert_eq!(count, 64);
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bisection_hits_tolerance() {
        let x = invert_by_bisection(|v| v * v, 0.25, 0.0, 1.0, 1e-10);
        assert!((x - 0.5).abs() < 1e-10);
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!(normal_cdf(-40.0) >= 0.0);
    }
}
