//! Execution helpers shared by the estimators and the experiment harness.
//!
//! Every reduction goes through a fixed split tree so that the parallel and
//! sequential paths produce bit-identical floating point results. With the
//! `parallel` feature disabled, [`Execution::Parallel`] silently degrades to
//! the sequential path.

use serde::{Deserialize, Serialize};

/// Leaf size of the pairwise summation tree.
const SUM_BLOCK: usize = 512;

/// How data-parallel loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// True when work actually fans out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..len`, collecting results in index order.
pub fn map_indexed<R, F>(exec: Execution, len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..len).map(f).collect()
}

/// Maps `f` over a slice, collecting results in order.
pub fn map_slice<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Fallible variant of [`map_slice`]; returns the first error in slice order.
pub fn try_map_slice<T, R, E, F>(exec: Execution, items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map_slice(exec, items, f).into_iter().collect()
}

/// Pairwise (tree) summation with a fixed split structure.
pub fn pairwise_sum(exec: Execution, values: &[f64]) -> f64 {
    if values.len() <= SUM_BLOCK {
        return values.iter().sum();
    }
    let mid = split_point(values.len());
    let (left, right) = values.split_at(mid);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        let (a, b) = rayon::join(|| pairwise_sum(exec, left), || pairwise_sum(exec, right));
        return a + b;
    }
    pairwise_sum(exec, left) + pairwise_sum(exec, right)
}

fn split_point(len: usize) -> usize {
    // Split on a block boundary so the leaves are the same whatever the path.
    let blocks = len.div_ceil(SUM_BLOCK);
    (blocks / 2) * SUM_BLOCK
}
