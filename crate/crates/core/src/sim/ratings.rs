//! Semi-synthetic slate simulator built from a user-item ratings matrix.
//!
//! Pipeline: binarize interactions, fit an EASE item-item model `B`, keep
//! users with a moderate history length, score every item with `x · B`, keep
//! each user's top `N` items as its candidate set, and reward a slate by its
//! nDCG against the user's ideal ranking.
//!
//! Gains are the candidate scores shifted so the weakest candidate has gain
//! zero. The same candidate may appear in several slots and contributes its
//! discounted gain each time, so the reward is exactly additive over slots.
//! A consequence is that slates that repeat strong candidates can score
//! above the ideal ranking; the declared reward range accounts for that.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{empirical_cdf, Environment};
use crate::error::{Error, Result};
use crate::estimators::RewardGrid;
use crate::metrics::StepCdf;
use crate::par::{self, Execution};
use crate::policy::{sample_slate, FactoredPolicy};
use crate::rng::{rng_from_seed, SimRng};
use crate::slate::{ContextId, RewardRange, Slate, SlateConfig};

/// Largest item count accepted by the dense EASE solve.
pub const EASE_ITEM_LIMIT: usize = 2000;

/// Minimum Monte-Carlo draws for the simulated ground truth.
pub const MIN_GROUND_TRUTH_DRAWS: usize = 100_000;

/// Default Monte-Carlo draws when enumeration is out of reach.
pub const DEFAULT_GROUND_TRUTH_DRAWS: usize = 1_000_000;

/// Binary user x item interaction matrix, stored as sorted item lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsMatrix {
    pub num_items: usize,
    /// `histories[u]`: dense item indices user `u` interacted with, ascending.
    pub histories: Vec<Vec<u32>>,
    /// Original user id of each row.
    pub user_ids: Vec<u64>,
    /// Original item id of each dense item index, ascending.
    pub item_ids: Vec<u64>,
}

impl RatingsMatrix {
    /// Builds a matrix from `(user_id, item_id)` pairs; duplicates collapse.
    /// Dense indices follow ascending original ids.
    pub fn from_pairs<I: IntoIterator<Item = (u64, u64)>>(pairs: I) -> Result<Self> {
        let mut by_user: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
        let mut items = BTreeSet::new();
        for (u, i) in pairs {
            by_user.entry(u).or_default().insert(i);
            items.insert(i);
        }
        if by_user.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let item_ids: Vec<u64> = items.into_iter().collect();
        let index: BTreeMap<u64, u32> = item_ids
            .iter()
            .enumerate()
            .map(|(j, &id)| (id, j as u32))
            .collect();
        let (user_ids, histories) = by_user
            .into_iter()
            .map(|(u, set)| (u, set.iter().map(|i| index[i]).collect()))
            .unzip();
        Ok(Self {
            num_items: item_ids.len(),
            histories,
            user_ids,
            item_ids,
        })
    }

    pub fn num_users(&self) -> usize {
        self.histories.len()
    }

    pub fn num_interactions(&self) -> usize {
        self.histories.iter().map(Vec::len).sum()
    }

    /// Restricts the item universe to the `max_items` most frequent items
    /// (ties by ascending item id) and drops users left without history.
    pub fn keep_top_items(&self, max_items: usize) -> Result<Self> {
        let mut counts = vec![0usize; self.num_items];
        for h in &self.histories {
            for &i in h {
                counts[i as usize] += 1;
            }
        }
        let mut order: Vec<usize> = (0..self.num_items).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        let kept: BTreeSet<usize> = order.into_iter().take(max_items).collect();
        let pairs = self.histories.iter().enumerate().flat_map(|(u, h)| {
            h.iter()
                .filter(|&&i| kept.contains(&(i as usize)))
                .map(move |&i| (self.user_ids[u], self.item_ids[i as usize]))
        });
        Self::from_pairs(pairs.collect::<Vec<_>>())
    }
}

/// Options for MovieLens-style CSV ingestion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    /// Ratings at or above this value count as interactions.
    pub rating_threshold: f64,
    pub delimiter: u8,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            rating_threshold: 4.0,
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub kept: usize,
    pub below_threshold: usize,
    pub malformed: usize,
    pub users: usize,
    pub items: usize,
}

/// Reads `userId,movieId,rating,timestamp` CSV and binarizes it.
pub fn ingest_movielens_csv<P: AsRef<Path>>(
    path: P,
    options: IngestOptions,
) -> Result<(RatingsMatrix, IngestReport)> {
    let file = std::fs::File::open(path)?;
    ingest_movielens_reader(file, options)
}

pub fn ingest_movielens_reader<R: Read>(
    input: R,
    options: IngestOptions,
) -> Result<(RatingsMatrix, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.len() < 3 || names[..3] != ["userId", "movieId", "rating"] {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header userId,movieId,rating[,timestamp], found '{}'",
                names.join(",")
            ),
        });
    }
    let mut report = IngestReport {
        rows: 0,
        kept: 0,
        below_threshold: 0,
        malformed: 0,
        users: 0,
        items: 0,
    };
    let mut pairs = Vec::new();
    for record in reader.records() {
        report.rows += 1;
        let parsed = record.ok().and_then(|r| {
            let u = r.get(0)?.trim().parse::<u64>().ok()?;
            let i = r.get(1)?.trim().parse::<u64>().ok()?;
            let rating = r.get(2)?.trim().parse::<f64>().ok()?;
            Some((u, i, rating))
        });
        match parsed {
            Some((u, i, rating)) if rating >= options.rating_threshold => {
                report.kept += 1;
                pairs.push((u, i));
            }
            Some(_) => report.below_threshold += 1,
            None => report.malformed += 1,
        }
    }
    if report.malformed > 0 {
        log::warn!("skipped {} malformed rating rows", report.malformed);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let matrix = RatingsMatrix::from_pairs(pairs)?;
    report.users = matrix.num_users();
    report.items = matrix.num_items;
    Ok((matrix, report))
}

/// Seeded low-rank ratings matrix for desk-scale experiments.
///
/// Users and items get 4-dimensional Gaussian embeddings plus an item
/// popularity term; each user interacts with `Uniform{8..=17}` items drawn
/// by Gumbel-top-k on the affinity scores, so some users fall outside the
/// default 10-15 history filter.
pub fn synthetic_ratings(num_users: usize, num_items: usize, seed: u64) -> Result<RatingsMatrix> {
    const DIM: usize = 4;
    if num_items < 17 || num_users == 0 {
        return Err(Error::InvalidArgument(format!(
            "synthetic ratings need >= 1 user and >= 17 items, got {num_users} x {num_items}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let gauss = |rng: &mut SimRng| -> f64 { rng.sample(StandardNormal) };
    let items: Vec<[f64; DIM]> = (0..num_items)
        .map(|_| std::array::from_fn(|_| gauss(&mut rng)))
        .collect();
    let popularity: Vec<f64> = (0..num_items).map(|_| 0.5 * gauss(&mut rng)).collect();
    let mut pairs = Vec::new();
    for u in 0..num_users {
        let user: [f64; DIM] = std::array::from_fn(|_| gauss(&mut rng));
        let len = rng.random_range(8..=17usize);
        let mut keyed: Vec<(f64, usize)> = (0..num_items)
            .map(|i| {
                let affinity: f64 =
                    user.iter().zip(&items[i]).map(|(a, b)| a * b).sum::<f64>() + popularity[i];
                let g: f64 = -(-rng.random::<f64>().max(1e-300).ln()).ln();
                (affinity + g, i)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        pairs.extend(keyed[..len].iter().map(|&(_, i)| (u as u64, i as u64)));
    }
    RatingsMatrix::from_pairs(pairs)
}

/// EASE item-item weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceModel {
    pub lambda: f64,
    /// `l x l`, zero diagonal.
    pub weights: DMatrix<f64>,
}

impl PreferenceModel {
    /// `x · B` for a binary history.
    pub fn scores(&self, history: &[u32]) -> Vec<f64> {
        let l = self.weights.ncols();
        let mut out = vec![0.0; l];
        for &i in history {
            let row = self.weights.row(i as usize);
            for (o, b) in out.iter_mut().zip(row.iter()) {
                *o += b;
            }
        }
        out
    }
}

/// Gram matrix `XᵀX` of the binary interactions.
pub fn gram_matrix(ratings: &RatingsMatrix) -> DMatrix<f64> {
    let l = ratings.num_items;
    let mut g = DMatrix::zeros(l, l);
    for h in &ratings.histories {
        for &i in h {
            for &j in h {
                g[(i as usize, j as usize)] += 1.0;
            }
        }
    }
    g
}

/// Closed-form EASE fit: `P = (XᵀX + λI)⁻¹`, `B = I - P diag(1/diag P)`,
/// diagonal set to zero.
pub fn fit_ease(ratings: &RatingsMatrix, lambda: f64) -> Result<PreferenceModel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} must be > 0")));
    }
    let l = ratings.num_items;
    if l > EASE_ITEM_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "{l} items exceed the dense solve limit of {EASE_ITEM_LIMIT}; trim the item set first"
        )));
    }
    let mut g = gram_matrix(ratings);
    for i in 0..l {
        g[(i, i)] += lambda;
    }
    let p = g
        .cholesky()
        .ok_or_else(|| {
            Error::Numerical(format!(
                "regularized Gram matrix is not positive definite; increase lambda (now {lambda})"
            ))
        })?
        .inverse();
    let mut b = DMatrix::zeros(l, l);
    for j in 0..l {
        let pjj = p[(j, j)];
        for i in 0..l {
            if i != j {
                b[(i, j)] = -p[(i, j)] / pjj;
            }
        }
    }
    Ok(PreferenceModel {
        lambda,
        weights: b,
    })
}

/// History filter and candidate-set parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatorParams {
    pub min_history: usize,
    pub max_history: usize,
    pub top_n: usize,
    pub num_slots: usize,
}

impl Default for SimulatorParams {
    fn default() -> Self {
        Self {
            min_history: 10,
            max_history: 15,
            top_n: 20,
            num_slots: 5,
        }
    }
}

/// One simulated user: its candidate items and their scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlateSimUser {
    pub context: ContextId,
    pub user_id: u64,
    /// Original item ids of the candidates, by descending score.
    pub candidates: Vec<u64>,
    /// `x · B` score of each candidate.
    pub scores: Vec<f64>,
    /// Scores shifted so the smallest is zero.
    pub gains: Vec<f64>,
    /// Local candidate indices by descending score.
    pub ideal: Vec<usize>,
    /// DCG of the top-`K` ideal ranking.
    pub idcg: f64,
}

fn discount(slot: usize) -> f64 {
    ((slot + 2) as f64).log2()
}

/// `DCG(slate) / IDCG` with gain `gains[a]` and discount `log2(k + 1)` for
/// 1-based slot `k`; zero when `IDCG = 0`.
pub fn ndcg_reward(user: &SlateSimUser, slate: &[usize]) -> f64 {
    if user.idcg == 0.0 {
        return 0.0;
    }
    let dcg: f64 = slate
        .iter()
        .enumerate()
        .map(|(k, &a)| user.gains[a] / discount(k))
        .sum();
    dcg / user.idcg
}

/// Slate simulator over a population of users (one context per user).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingsSlateEnv {
    pub config: SlateConfig,
    pub params: SimulatorParams,
    pub users: Vec<SlateSimUser>,
    pub reward_range: RewardRange,
    /// Rollouts used by [`Environment::target_cdf`] when enumeration is out
    /// of reach.
    #[serde(default = "default_draws")]
    pub ground_truth_draws: usize,
}

fn default_draws() -> usize {
    DEFAULT_GROUND_TRUTH_DRAWS
}

impl RatingsSlateEnv {
    /// Builds the simulator from a fitted model. `B` is fit on the whole
    /// matrix; the history filter applies afterwards.
    pub fn build(ratings: &RatingsMatrix, model: &PreferenceModel, params: SimulatorParams) -> Result<Self> {
        let config = SlateConfig::new(params.num_slots, params.top_n)?;
        if params.num_slots > params.top_n {
            return Err(Error::InvalidConfig(format!(
                "K = {} exceeds the candidate count N = {}",
                params.num_slots, params.top_n
            )));
        }
        if params.top_n > ratings.num_items {
            return Err(Error::InvalidConfig(format!(
                "top_n = {} exceeds the item count {}",
                params.top_n, ratings.num_items
            )));
        }
        if model.weights.ncols() != ratings.num_items {
            return Err(Error::InvalidArgument("model and ratings disagree on item count".into()));
        }
        let mut users = Vec::new();
        for (u, history) in ratings.histories.iter().enumerate() {
            if history.len() < params.min_history || history.len() > params.max_history {
                continue;
            }
            let scores = model.scores(history);
            let mut order: Vec<usize> = (0..ratings.num_items).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            order.truncate(params.top_n);
            let cand_scores: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
            let floor = cand_scores.iter().copied().fold(f64::INFINITY, f64::min);
            let gains: Vec<f64> = cand_scores.iter().map(|s| s - floor).collect();
            let ideal: Vec<usize> = (0..params.top_n).collect();
            let idcg = ideal[..params.num_slots]
                .iter()
                .enumerate()
                .map(|(k, &a)| gains[a] / discount(k))
                .sum();
            users.push(SlateSimUser {
                context: ContextId(users.len()),
                user_id: ratings.user_ids[u],
                candidates: order.iter().map(|&i| ratings.item_ids[i]).collect(),
                scores: cand_scores,
                gains,
                ideal,
                idcg,
            });
        }
        if users.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no user has a history of {} to {} items ({} users, {} items)",
                params.min_history,
                params.max_history,
                ratings.num_users(),
                ratings.num_items
            )));
        }
        let total_discount: f64 = (0..params.num_slots).map(|k| 1.0 / discount(k)).sum();
        let top = users
            .iter()
            .filter(|u| u.idcg > 0.0)
            .map(|u| u.gains[u.ideal[0]] * total_discount / u.idcg)
            .fold(1.0, f64::max);
        Ok(Self {
            config,
            params,
            users,
            reward_range: RewardRange::new(0.0, top)?,
            ground_truth_draws: DEFAULT_GROUND_TRUTH_DRAWS,
        })
    }

    pub fn with_ground_truth_draws(mut self, draws: usize) -> Result<Self> {
        if draws < MIN_GROUND_TRUTH_DRAWS {
            return Err(Error::InvalidConfig(format!(
                "ground truth needs at least {MIN_GROUND_TRUTH_DRAWS} draws, got {draws}"
            )));
        }
        self.ground_truth_draws = draws;
        Ok(self)
    }

    pub fn user(&self, context: ContextId) -> &SlateSimUser {
        &self.users[context.0]
    }

    /// Greedy slate of a user: its top-`K` candidates in score order.
    pub fn ideal_slate(&self, context: ContextId) -> Slate {
        Slate(self.user(context).ideal[..self.config.num_slots].to_vec())
    }

    /// On-policy reward CDF of `target`: exact per-user enumeration when the
    /// slate space is within the enumeration guard, otherwise `draws`
    /// seeded Monte-Carlo rollouts.
    pub fn ground_truth_target_cdf<P: FactoredPolicy + ?Sized>(
        &self,
        target: &P,
        grid: &RewardGrid,
        draws: usize,
        seed: u64,
    ) -> Result<StepCdf> {
        if self.config.check_enumerable().is_ok() {
            self.enumerated_cdf(target, grid)
        } else {
            self.simulated_cdf(target, grid, draws, seed)
        }
    }

    /// Exact mixture over users and slates.
    pub fn enumerated_cdf<P: FactoredPolicy + ?Sized>(&self, target: &P, grid: &RewardGrid) -> Result<StepCdf> {
        self.config.check_enumerable()?;
        let per_user = par::map_slice(Execution::default(), &self.users, |user| {
            let mut hist = vec![0.0; grid.len() + 1];
            self.enumerate_user(target, user, grid, &mut hist);
            hist
        });
        let mut mass = vec![0.0; grid.len() + 1];
        for hist in &per_user {
            for (m, h) in mass.iter_mut().zip(hist) {
                *m += h;
            }
        }
        let w = 1.0 / self.users.len() as f64;
        let mut acc = 0.0;
        let values = mass[..grid.len()]
            .iter()
            .map(|m| {
                acc += m * w;
                acc
            })
            .collect();
        crate::env::normalized_cdf(grid, values)
    }

    fn enumerate_user<P: FactoredPolicy + ?Sized>(
        &self,
        target: &P,
        user: &SlateSimUser,
        grid: &RewardGrid,
        hist: &mut [f64],
    ) {
        let k = self.config.num_slots;
        // (probability, discounted gain) of each supported action, per slot
        let table: Vec<Vec<(f64, f64)>> = (0..k)
            .map(|slot| {
                (0..self.config.actions_per_slot)
                    .map(|a| (target.slot_prob(user.context, slot, a), user.gains[a] / discount(slot)))
                    .filter(|&(p, _)| p > 0.0)
                    .collect()
            })
            .collect();
        if user.idcg == 0.0 {
            hist[grid.bin_index(0.0)] += 1.0;
            return;
        }
        let idcg = user.idcg;
        fn walk(
            table: &[Vec<(f64, f64)>],
            slot: usize,
            prob: f64,
            dcg: f64,
            idcg: f64,
            grid: &RewardGrid,
            hist: &mut [f64],
        ) {
            if slot + 1 == table.len() {
                for &(p, c) in &table[slot] {
                    hist[grid.bin_index((dcg + c) / idcg)] += prob * p;
                }
                return;
            }
            for &(p, c) in &table[slot] {
                walk(table, slot + 1, prob * p, dcg + c, idcg, grid, hist);
            }
        }
        walk(&table, 0, 1.0, 0.0, idcg, grid, hist);
    }

    /// Seeded on-policy rollouts.
    pub fn simulated_cdf<P: FactoredPolicy + ?Sized>(
        &self,
        target: &P,
        grid: &RewardGrid,
        draws: usize,
        seed: u64,
    ) -> Result<StepCdf> {
        if draws < MIN_GROUND_TRUTH_DRAWS {
            return Err(Error::InvalidArgument(format!(
                "ground truth needs at least {MIN_GROUND_TRUTH_DRAWS} draws, got {draws}"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let samples: Vec<f64> = (0..draws)
            .map(|_| {
                let x = ContextId(rng.random_range(0..self.users.len()));
                let slate = sample_slate(target, x, &mut rng);
                ndcg_reward(self.user(x), &slate)
            })
            .collect();
        let cdf = empirical_cdf(&samples, grid)?;
        crate::env::normalized_cdf(grid, cdf.values().to_vec())
    }
}

impl Environment for RatingsSlateEnv {
    fn config(&self) -> SlateConfig {
        self.config
    }

    fn num_contexts(&self) -> usize {
        self.users.len()
    }

    fn reward_range(&self) -> RewardRange {
        self.reward_range
    }

    fn sample_reward(&self, context: ContextId, slate: &[usize], _rng: &mut SimRng) -> f64 {
        ndcg_reward(self.user(context), slate)
    }

    fn preferred_slate(&self, context: ContextId) -> Option<Slate> {
        Some(self.ideal_slate(context))
    }

    fn target_cdf(&self, target: &dyn FactoredPolicy, grid: &RewardGrid, seed: u64) -> Result<StepCdf> {
        self.ground_truth_target_cdf(target, grid, self.ground_truth_draws, seed)
    }

    fn expected_reward(&self, context: ContextId, slate: &[usize]) -> Option<f64> {
        Some(ndcg_reward(self.user(context), slate))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ks_statistic;
    use crate::policy::{EpsilonGreedyPolicy, UniformPolicy};
    use crate::slate::enumerate_slates;

    fn matrix(rows: &[&[u64]]) -> RatingsMatrix {
        let pairs = rows
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u as u64, i)));
        RatingsMatrix::from_pairs(pairs.collect::<Vec<_>>()).unwrap()
    }

    fn user_with_gains(gains: Vec<f64>, k: usize) -> SlateSimUser {
        let mut ideal: Vec<usize> = (0..gains.len()).collect();
        ideal.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
        let idcg = ideal[..k].iter().enumerate().map(|(s, &a)| gains[a] / discount(s)).sum();
        SlateSimUser {
            context: ContextId(0),
            user_id: 0,
            candidates: (0..gains.len() as u64).collect(),
            scores: gains.clone(),
            gains,
            ideal,
            idcg,
        }
    }

    #[test]
    fn ease_has_zero_diagonal() {
        let r = synthetic_ratings(40, 30, 1).unwrap();
        let m = fit_ease(&r, 5.0).unwrap();
        for i in 0..r.num_items {
            assert_eq!(m.weights[(i, i)], 0.0);
        }
    }

    #[test]
    fn co_occurring_items_dominate_their_rows() {
        // items 0 and 1 always appear together
        let r = matrix(&[&[0, 1, 2], &[0, 1, 3], &[0, 1], &[2, 3]]);
        let m = fit_ease(&r, 0.1).unwrap();
        let b = &m.weights;
        for (i, j) in [(0usize, 1usize), (1, 0)] {
            for c in 0..4 {
                if c != i && c != j {
                    assert!(b[(i, j)] > b[(i, c)], "B[{i},{j}] vs B[{i},{c}]");
                }
            }
        }
    }

    #[test]
    fn ease_rejects_bad_lambda() {
        let r = matrix(&[&[0, 1]]);
        assert!(fit_ease(&r, 0.0).is_err());
        assert!(fit_ease(&r, f64::NAN).is_err());
    }

    #[test]
    fn scores_are_history_row_sums() {
        let r = matrix(&[&[0, 1], &[1, 2], &[0, 2, 3]]);
        let m = fit_ease(&r, 1.0).unwrap();
        for h in &r.histories {
            let s = m.scores(h);
            for j in 0..r.num_items {
                let direct: f64 = h.iter().map(|&i| m.weights[(i as usize, j)]).sum();
                assert!((s[j] - direct).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn history_filter_is_inclusive() {
        let lens = [9usize, 10, 15, 16];
        let pairs: Vec<(u64, u64)> = lens
            .iter()
            .enumerate()
            .flat_map(|(u, &len)| (0..len as u64).map(move |i| (u as u64, (i * 7 + u as u64) % 30)))
            .collect();
        let mut r = RatingsMatrix::from_pairs(pairs).unwrap();
        // make sure every item id 0..30 exists
        r.num_items = r.item_ids.len();
        let m = fit_ease(&r, 10.0).unwrap();
        let params = SimulatorParams {
            top_n: 5,
            num_slots: 2,
            ..SimulatorParams::default()
        };
        let env = RatingsSlateEnv::build(&r, &m, params).unwrap();
        let kept: Vec<u64> = env.users.iter().map(|u| u.user_id).collect();
        assert_eq!(kept, vec![1, 2]);
        for u in &env.users {
            assert!(u.scores.windows(2).all(|w| w[0] >= w[1]));
            assert_eq!(u.gains.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        }
    }

    #[test]
    fn no_surviving_users_is_an_error() {
        let r = matrix(&[&[0, 1, 2], &[1, 2, 3]]);
        let m = fit_ease(&r, 1.0).unwrap();
        let params = SimulatorParams {
            top_n: 2,
            num_slots: 1,
            ..SimulatorParams::default()
        };
        let err = RatingsSlateEnv::build(&r, &m, params).unwrap_err();
        assert!(err.to_string().contains("2 users"), "{err}");
    }

    #[test]
    fn ndcg_examples() {
        let u = user_with_gains(vec![3.0, 1.0, 0.0], 2);
        assert_eq!(ndcg_reward(&u, &[0, 1]), 1.0);
        // the worked example: gains (3, 1), slate picks gain 1 then gain 3
        let r = ndcg_reward(&u, &[1, 0]);
        let dcg = 1.0 + 3.0 / 3f64.log2();
        let idcg = 3.0 + 1.0 / 3f64.log2();
        assert!((r - dcg / idcg).abs() < 1e-12);
        assert!((r - 0.7967).abs() < 1e-4);

        let single = user_with_gains(vec![4.0, 2.0, 0.0], 1);
        assert_eq!(ndcg_reward(&single, &[1]), 0.5);
        assert_eq!(ndcg_reward(&single, &[2]), 0.0);

        let flat = user_with_gains(vec![0.0, 0.0], 1);
        assert_eq!(ndcg_reward(&flat, &[1]), 0.0);
    }

    #[test]
    fn ndcg_is_additive_over_slots() {
        let u = user_with_gains(vec![5.0, 3.5, 2.0, 0.7, 0.0], 3);
        for s in enumerate_slates(SlateConfig::new(3, 5).unwrap()).unwrap() {
            let parts: f64 = s.iter().enumerate().map(|(k, &a)| u.gains[a] / discount(k) / u.idcg).sum();
            assert!((ndcg_reward(&u, &s) - parts).abs() < 1e-12);
        }
    }

    #[test]
    fn ingestion_filters_and_collapses() {
        let csv = "userId,movieId,rating,timestamp\n1,10,5.0,0\n1,11,3.0,0\n2,10,4.0,0\n";
        let (m, rep) = ingest_movielens_reader(csv.as_bytes(), IngestOptions::default()).unwrap();
        assert_eq!(rep.kept, 2);
        assert_eq!(m.num_interactions(), 2);

        let dup = "userId,movieId,rating,timestamp\n1,10,5,0\n1,10,4.5,1\n";
        let (m, _) = ingest_movielens_reader(dup.as_bytes(), IngestOptions::default()).unwrap();
        assert_eq!(m.num_interactions(), 1);

        let headless = "1,10,5.0,0\n";
        assert!(ingest_movielens_reader(headless.as_bytes(), IngestOptions::default()).is_err());

        let messy = "userId,movieId,rating,timestamp\n1,10,5,0\nx,1,5,0\n2,3\n3,4,4.5,0\n";
        let (m, rep) = ingest_movielens_reader(messy.as_bytes(), IngestOptions::default()).unwrap();
        assert_eq!((rep.malformed, m.num_users()), (2, 2));

        let semi = "userId;movieId;rating;timestamp\n1;10;5;0\n";
        let opts = IngestOptions {
            delimiter: b';',
            ..IngestOptions::default()
        };
        assert!(ingest_movielens_reader(semi.as_bytes(), opts).is_ok());

        let low = "userId,movieId,rating,timestamp\n1,10,1.0,0\n";
        assert!(ingest_movielens_reader(low.as_bytes(), IngestOptions::default()).is_err());
    }

    #[test]
    fn top_item_trimming() {
        let r = matrix(&[&[0, 1, 2], &[0, 1], &[0, 3]]);
        let t = r.keep_top_items(2).unwrap();
        assert_eq!(t.item_ids, vec![0, 1]);
        assert_eq!(t.num_users(), 3);
    }

    fn small_env() -> RatingsSlateEnv {
        let r = synthetic_ratings(60, 40, 7).unwrap();
        let m = fit_ease(&r, 10.0).unwrap();
        let params = SimulatorParams {
            top_n: 4,
            num_slots: 2,
            ..SimulatorParams::default()
        };
        let mut env = RatingsSlateEnv::build(&r, &m, params).unwrap();
        env.users.truncate(5);
        env
    }

    #[test]
    fn deterministic_target_single_user_is_point_mass() {
        let mut env = small_env();
        env.users.truncate(1);
        let grid = RewardGrid::uniform(env.reward_range, 500).unwrap();
        let greedy = env.ideal_slate(ContextId(0));
        let pi = EpsilonGreedyPolicy::new(env.config, 0.0, vec![greedy.clone()]).unwrap();
        let cdf = env.ground_truth_target_cdf(&pi, &grid, MIN_GROUND_TRUTH_DRAWS, 0).unwrap();
        let r = ndcg_reward(&env.users[0], &greedy);
        let j = grid.bin_index(r);
        assert!(cdf.values()[..j].iter().all(|&v| v == 0.0));
        assert!(cdf.values()[j..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn enumeration_and_simulation_agree() {
        let env = small_env();
        let grid = RewardGrid::uniform(env.reward_range, 200).unwrap();
        let greedy: Vec<Slate> = (0..env.users.len()).map(|x| env.ideal_slate(ContextId(x))).collect();
        let pi = EpsilonGreedyPolicy::new(env.config, 0.1, greedy).unwrap();
        let exact = env.enumerated_cdf(&pi, &grid).unwrap();
        let simulated = env.simulated_cdf(&pi, &grid, 200_000, 3).unwrap();
        assert!(ks_statistic(&exact, &simulated).unwrap() < 0.01);
        assert!(env.simulated_cdf(&pi, &grid, 10, 3).is_err());
    }

    #[test]
    fn identical_users_match_single_user() {
        let mut env = small_env();
        let one = env.users[0].clone();
        env.users = (0..4)
            .map(|x| SlateSimUser {
                context: ContextId(x),
                ..one.clone()
            })
            .collect();
        let grid = RewardGrid::uniform(env.reward_range, 300).unwrap();
        let u = UniformPolicy::new(env.config);
        let all = env.enumerated_cdf(&u, &grid).unwrap();
        env.users.truncate(1);
        let single = env.enumerated_cdf(&u, &grid).unwrap();
        assert!(ks_statistic(&all, &single).unwrap() < 1e-12);
    }

    #[test]
    fn rewards_within_declared_range() {
        let env = small_env();
        for x in 0..env.users.len() {
            for s in enumerate_slates(env.config).unwrap() {
                let r = ndcg_reward(env.user(ContextId(x)), &s);
                assert!(env.reward_range.contains(r));
            }
        }
    }

    #[test]
    fn manifest_round_trip() {
        let env = small_env();
        let json = serde_json::to_string(&env).unwrap();
        let back: RatingsSlateEnv = serde_json::from_str(&json).unwrap();
        assert_eq!(back, env);
    }
}
