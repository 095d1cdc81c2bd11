//! Latent-dimension selection by K-fold cross-validation over observed
//! dissimilarity pairs.
//!
//! Observed pairs are split into folds; each fold is held out in turn while
//! the model is fit to the rest, and the held-out pairs are scored by their
//! log predictive density averaged over posterior draws (a log-mean-exp,
//! computed with a max shift so it never overflows). The candidate dimension
//! with the largest total wins.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::model::likelihood::pair_term;
use crate::model::normal::LN_2PI;
use crate::model::types::{DissimilarityData, LatentConfiguration, PairMask};

/// Assignment of every observed pair (i > j) to one of `k` folds.
///
/// Fold sizes differ by at most one and the assignment is a pure function of
/// the seed, so a plan can be rebuilt or audited after the fact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    seed: u64,
    n: usize,
    /// (i, j, fold) with i > j, kept in i-major pair order.
    assignments: Vec<(usize, usize, usize)>,
}

/// Uniformly partitions the observed pairs of `data` into `k` folds.
///
/// Shuffles the pair list with a seeded generator and deals folds round
/// robin, so sizes are balanced to within one pair.
pub fn make_folds(data: &DissimilarityData, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid_argument(format!(
            "cross-validation needs at least 2 folds, got {k}"
        )));
    }
    let pairs: Vec<(usize, usize)> = data.mask().observed_pairs().collect();
    if pairs.len() < k {
        return Err(Error::invalid_input(format!(
            "cannot split {} observed pairs into {k} folds",
            pairs.len()
        )));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold_of = vec![0usize; pairs.len()];
    for (pos, &idx) in order.iter().enumerate() {
        fold_of[idx] = pos % k;
    }
    let assignments = pairs
        .iter()
        .zip(&fold_of)
        .map(|(&(i, j), &f)| (i, j, f))
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        n: data.n(),
        assignments,
    })
}

impl FoldPlan {
    /// Rebuilds a plan from stored parts (the sidecar file round trip).
    /// Enforces the same invariants `make_folds` guarantees.
    pub fn from_parts(
        k: usize,
        seed: u64,
        n: usize,
        assignments: Vec<(usize, usize, usize)>,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid_argument(format!(
                "cross-validation needs at least 2 folds, got {k}"
            )));
        }
        if assignments.len() < k {
            return Err(Error::invalid_input(format!(
                "plan assigns {} pairs across {k} folds",
                assignments.len()
            )));
        }
        let mut seen = PairMask::none_observed(n);
        let mut sizes = vec![0usize; k];
        for &(i, j, fold) in &assignments {
            if i >= n || j >= i {
                return Err(Error::invalid_input(format!(
                    "fold plan pair ({i}, {j}) is not a lower-triangle pair for n = {n}"
                )));
            }
            if fold >= k {
                return Err(Error::invalid_input(format!(
                    "fold index {fold} out of range for k = {k}"
                )));
            }
            if seen.is_observed(i, j) {
                return Err(Error::invalid_input(format!(
                    "pair ({i}, {j}) assigned to more than one fold"
                )));
            }
            seen.set(i, j, true);
            sizes[fold] += 1;
        }
        let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        if max - min > 1 {
            return Err(Error::invalid_input(format!(
                "fold sizes {sizes:?} are unbalanced"
            )));
        }
        Ok(FoldPlan {
            k,
            seed,
            n,
            assignments,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Item count of the data set the plan was built for.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn assignments(&self) -> &[(usize, usize, usize)] {
        &self.assignments
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &(_, _, fold) in &self.assignments {
            sizes[fold] += 1;
        }
        sizes
    }

    /// Pairs held out in `fold`, in i-major order.
    pub fn heldout_pairs(&self, fold: usize) -> Vec<(usize, usize)> {
        assert!(fold < self.k, "fold {fold} out of range for k = {}", self.k);
        self.assignments
            .iter()
            .filter(|&&(_, _, f)| f == fold)
            .map(|&(i, j, _)| (i, j))
            .collect()
    }

    /// Training view for `fold`: same values, mask narrowed to every
    /// assigned pair not held out in `fold`.
    pub fn training_data(
        &self,
        data: &DissimilarityData,
        fold: usize,
    ) -> Result<DissimilarityData> {
        assert!(fold < self.k, "fold {fold} out of range for k = {}", self.k);
        if data.n() != self.n {
            return Err(Error::invalid_argument(format!(
                "fold plan was built for {} items, data has {}",
                self.n,
                data.n()
            )));
        }
        let mut mask = PairMask::none_observed(self.n);
        for &(i, j, f) in &self.assignments {
            if f != fold {
                mask.set(i, j, true);
            }
        }
        // with_mask re-checks that every training pair is observed in data,
        // so a plan built for different data cannot leak unobserved entries.
        data.with_mask(mask)
    }
}

/// Log predictive density of one held-out dissimilarity `y` given a latent
/// distance `delta` and noise variance `sigma2`:
///
/// ```text
/// -½ log(2πσ²) - (y-δ)²/(2σ²) - log Φ(δ/σ)
/// ```
///
/// This is the same truncated-normal density the training likelihood sums,
/// normalizing constant included, so totals are comparable across σ².
pub fn held_out_log_density(y: f64, delta: f64, sigma2: f64) -> Result<f64> {
    if y < 0.0 {
        return Err(Error::invalid_input(format!(
            "held-out dissimilarity {y} is negative"
        )));
    }
    let term = pair_term(y, delta, sigma2)?;
    Ok(-0.5 * (LN_2PI + sigma2.ln()) - term)
}

/// `log((1/S) Σ exp(v_s))` with the maximum shifted out first, so inputs far
/// below zero do not underflow. Inputs of all `-inf` give `-inf`.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "log_mean_exp of an empty slice");
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let sum: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + (sum / values.len() as f64).ln()
}

/// One posterior draw, reduced to what the predictive density needs.
#[derive(Clone, Debug)]
pub struct PredictiveDraw {
    pub x: LatentConfiguration,
    pub sigma2: f64,
}

impl PredictiveDraw {
    pub fn new(x: LatentConfiguration, sigma2: f64) -> Self {
        PredictiveDraw { x, sigma2 }
    }
}

/// Held-out score of one cross-validation run: per-fold sums of log
/// predictive densities and their total.
#[derive(Clone, Debug)]
pub struct LpdReport {
    per_fold: Vec<f64>,
    total: f64,
    n_heldout: usize,
}

impl LpdReport {
    pub fn per_fold(&self) -> &[f64] {
        &self.per_fold
    }

    /// Sum over folds; the model-selection criterion (larger is better).
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn n_heldout(&self) -> usize {
        self.n_heldout
    }

    /// Total divided by the number of held-out pairs, for comparison with
    /// per-pair normalized reports.
    pub fn per_pair_average(&self) -> f64 {
        self.total / self.n_heldout as f64
    }
}

/// Scores a fold plan: for every held-out pair, the log of the mean
/// predictive density over that fold's posterior draws, summed per fold.
///
/// `fold_draws[f]` must hold at least one draw from a chain trained on the
/// fold-`f` training view.
pub fn lpd_hat(
    plan: &FoldPlan,
    data: &DissimilarityData,
    fold_draws: &[Vec<PredictiveDraw>],
) -> Result<LpdReport> {
    if data.n() != plan.n() {
        return Err(Error::invalid_argument(format!(
            "fold plan was built for {} items, data has {}",
            plan.n(),
            data.n()
        )));
    }
    if fold_draws.len() != plan.k() {
        return Err(Error::invalid_argument(format!(
            "expected draws for {} folds, got {}",
            plan.k(),
            fold_draws.len()
        )));
    }
    for (fold, draws) in fold_draws.iter().enumerate() {
        if draws.is_empty() {
            return Err(Error::invalid_input(format!(
                "fold {fold} has no posterior draws"
            )));
        }
        for draw in draws {
            if draw.x.n() != data.n() {
                return Err(Error::invalid_argument(format!(
                    "a fold-{fold} draw has {} rows, data has {} items",
                    draw.x.n(),
                    data.n()
                )));
            }
        }
    }
    let mut per_fold = Vec::with_capacity(plan.k());
    let mut n_heldout = 0usize;
    let mut scratch = Vec::new();
    for fold in 0..plan.k() {
        let draws = &fold_draws[fold];
        let mut fold_sum = 0.0;
        for (i, j) in plan.heldout_pairs(fold) {
            if !data.mask().is_observed(i, j) {
                return Err(Error::invalid_input(format!(
                    "fold plan holds out ({i}, {j}) which the data set does not observe"
                )));
            }
            let y = data.value(i, j);
            scratch.clear();
            for draw in draws {
                scratch.push(held_out_log_density(y, draw.x.distance(i, j), draw.sigma2)?);
            }
            fold_sum += log_mean_exp(&scratch);
            n_heldout += 1;
        }
        per_fold.push(fold_sum);
    }
    let total = per_fold.iter().sum();
    Ok(LpdReport {
        per_fold,
        total,
        n_heldout,
    })
}

/// Cross-validation totals per candidate dimension, with the winner under
/// the maximize rule (ties break toward the smaller dimension).
#[derive(Clone, Debug, Default)]
pub struct DimensionTable {
    entries: BTreeMap<usize, LpdReport>,
}

impl DimensionTable {
    pub fn new() -> Self {
        DimensionTable::default()
    }

    pub fn insert(&mut self, dim: usize, report: LpdReport) {
        self.entries.insert(dim, report);
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &LpdReport)> {
        self.entries.iter().map(|(&d, r)| (d, r))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (&dim, report) in &self.entries {
            let better = match best {
                None => true,
                // strict > keeps the smallest dimension on ties
                Some((_, t)) => report.total() > t,
            };
            if better {
                best = Some((dim, report.total()));
            }
        }
        best.map(|(dim, _)| dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_likelihood_serial;
    use crate::model::types::MdsParams;
    use rand::Rng;

    fn all_observed_data(n: usize, seed: u64) -> DissimilarityData {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in 0..i {
                pairs.push((i, j, rng.random_range(0.1..3.0)));
            }
        }
        DissimilarityData::from_observed_pairs(n, &pairs).unwrap()
    }

    #[test]
    fn folds_partition_all_observed_pairs() {
        let data = all_observed_data(15, 7);
        let plan = make_folds(&data, 4, 99).unwrap();
        assert_eq!(plan.assignments().len(), 105);
        let mut sizes = plan.fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![26, 26, 26, 27]);

        let mut seen = PairMask::none_observed(15);
        for fold in 0..4 {
            for (i, j) in plan.heldout_pairs(fold) {
                assert!(!seen.is_observed(i, j), "({i}, {j}) in two folds");
                seen.set(i, j, true);
            }
        }
        assert_eq!(seen.observed_pair_count(), 105);
    }

    #[test]
    fn four_pairs_two_folds_splits_evenly() {
        let data =
            DissimilarityData::from_observed_pairs(4, &[(1, 0, 1.0), (2, 0, 1.0), (2, 1, 1.0), (3, 0, 1.0)])
                .unwrap();
        let plan = make_folds(&data, 2, 5).unwrap();
        assert_eq!(plan.fold_sizes(), vec![2, 2]);
    }

    #[test]
    fn unbalanced_pair_count_stays_within_one() {
        // 103 pairs over 5 folds: three folds of 21, two of 20.
        let mut pairs = Vec::new();
        for i in 0..15usize {
            for j in 0..i {
                if (i, j) == (3, 1) || (i, j) == (9, 4) {
                    continue;
                }
                pairs.push((i, j, 1.0));
            }
        }
        assert_eq!(pairs.len(), 103);
        let data = DissimilarityData::from_observed_pairs(15, &pairs).unwrap();
        let plan = make_folds(&data, 5, 0).unwrap();
        let mut sizes = plan.fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![20, 20, 21, 21, 21]);
    }

    #[test]
    fn plans_are_seed_deterministic() {
        let data = all_observed_data(10, 3);
        let a = make_folds(&data, 3, 42).unwrap();
        let b = make_folds(&data, 3, 42).unwrap();
        assert_eq!(a, b);
        let c = make_folds(&data, 3, 43).unwrap();
        assert_ne!(a.assignments(), c.assignments());
    }

    #[test]
    fn fold_count_bounds_are_enforced() {
        let data = all_observed_data(4, 1);
        assert!(make_folds(&data, 1, 0).is_err());
        assert!(make_folds(&data, 7, 0).is_err());
        assert!(make_folds(&data, 6, 0).is_ok());
    }

    #[test]
    fn training_and_heldout_views_are_complementary() {
        let data = all_observed_data(9, 11);
        let plan = make_folds(&data, 3, 8).unwrap();
        for fold in 0..3 {
            let train = plan.training_data(&data, fold).unwrap();
            let heldout = plan.heldout_pairs(fold);
            assert_eq!(train.n_observed() + heldout.len(), data.n_observed());
            for &(i, j) in &heldout {
                assert!(!train.mask().is_observed(i, j), "held-out pair in training mask");
            }
            for (i, j) in train.mask().observed_pairs() {
                assert!(data.mask().is_observed(i, j));
            }
        }
    }

    #[test]
    fn from_parts_rejects_broken_plans() {
        let data = all_observed_data(5, 2);
        let plan = make_folds(&data, 2, 9).unwrap();
        let good = plan.assignments().to_vec();
        assert_eq!(
            FoldPlan::from_parts(2, 9, 5, good.clone()).unwrap(),
            plan
        );

        let mut dup = good.clone();
        dup[1] = dup[0];
        assert!(FoldPlan::from_parts(2, 9, 5, dup).is_err());

        let mut bad_fold = good.clone();
        bad_fold[0].2 = 2;
        assert!(FoldPlan::from_parts(2, 9, 5, bad_fold).is_err());

        let mut upper = good.clone();
        upper[0] = (0, 1, 0);
        assert!(FoldPlan::from_parts(2, 9, 5, upper).is_err());

        // all pairs piled into fold 0 is unbalanced
        let piled: Vec<_> = good.iter().map(|&(i, j, _)| (i, j, 0)).collect();
        assert!(FoldPlan::from_parts(2, 9, 5, piled).is_err());
    }

    #[test]
    fn held_out_density_frozen_values() {
        // y=1, delta=0, sigma2=1: -½ln(2π) - ½ - ln Φ(0) with Φ(0) = ½
        let got = held_out_log_density(1.0, 0.0, 1.0).unwrap();
        assert!((got - (-0.7257913526447274)).abs() < 1e-14);

        // far from the truncation boundary the constant is all that remains
        let sigma2 = 2.5;
        let got = held_out_log_density(40.0, 40.0, sigma2).unwrap();
        assert_eq!(got, -0.5 * (LN_2PI + sigma2.ln()));
    }

    #[test]
    fn held_out_density_rejects_bad_inputs() {
        assert!(held_out_log_density(-0.1, 1.0, 1.0).is_err());
        assert!(held_out_log_density(1.0, -1.0, 1.0).is_err());
        assert!(held_out_log_density(1.0, 1.0, 0.0).is_err());
        assert!(held_out_log_density(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn density_integrates_to_one_over_positive_y() {
        // composite Simpson on [0, delta + 14 sigma]
        for &(delta, sigma2) in &[(0.0f64, 1.0f64), (2.0, 0.5), (0.3, 4.0), (7.5, 2.0)] {
            let upper = delta + 14.0 * sigma2.sqrt();
            let m = 40_000usize;
            let h = upper / m as f64;
            let f = |y: f64| held_out_log_density(y, delta, sigma2).unwrap().exp();
            let mut acc = f(0.0) + f(upper);
            for s in 1..m {
                let w = if s % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * f(s as f64 * h);
            }
            let integral = acc * h / 3.0;
            assert!(
                (integral - 1.0).abs() < 1e-8,
                "delta={delta}, sigma2={sigma2}: integral {integral}"
            );
        }
    }

    #[test]
    fn pair_densities_sum_to_the_training_likelihood() {
        let data = all_observed_data(8, 21);
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let coords: Vec<f64> = (0..8 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = LatentConfiguration::new(8, 3, coords).unwrap();
        let sigma2 = 0.7;

        let mut sum = 0.0;
        for (i, j) in data.mask().observed_pairs() {
            sum += held_out_log_density(data.value(i, j), x.distance(i, j), sigma2).unwrap();
        }
        let ll = log_likelihood_serial(&data, &x, &MdsParams::new(sigma2).unwrap()).unwrap();
        assert!((sum - ll).abs() < 1e-10 * ll.abs().max(1.0));
    }

    #[test]
    fn log_mean_exp_shift_stability() {
        let values = [-1.3, -0.4, -2.2, -0.9];
        let base = log_mean_exp(&values);
        let shifted: Vec<f64> = values.iter().map(|v| v + 700.0).collect();
        assert!((log_mean_exp(&shifted) - (base + 700.0)).abs() < 1e-10);

        // values this deep underflow a naive mean of exponentials
        let deep: Vec<f64> = values.iter().map(|v| v - 1400.0).collect();
        assert!((log_mean_exp(&deep) - (base - 1400.0)).abs() < 1e-10);
        assert_eq!(log_mean_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }

    fn fixture() -> (FoldPlan, DissimilarityData) {
        let data = all_observed_data(6, 31);
        let plan = make_folds(&data, 2, 17).unwrap();
        (plan, data)
    }

    fn random_draw(n: usize, d: usize, sigma2: f64, seed: u64) -> PredictiveDraw {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let coords: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect();
        PredictiveDraw::new(LatentConfiguration::new(n, d, coords).unwrap(), sigma2)
    }

    #[test]
    fn single_draw_reduces_to_plain_density_sum() {
        let (plan, data) = fixture();
        let draws = vec![
            vec![random_draw(6, 2, 0.8, 100)],
            vec![random_draw(6, 2, 1.1, 101)],
        ];
        let report = lpd_hat(&plan, &data, &draws).unwrap();

        let mut expected = 0.0;
        for fold in 0..2 {
            let draw = &draws[fold][0];
            for (i, j) in plan.heldout_pairs(fold) {
                expected +=
                    held_out_log_density(data.value(i, j), draw.x.distance(i, j), draw.sigma2)
                        .unwrap();
            }
        }
        assert!((report.total() - expected).abs() < 1e-12);
        assert_eq!(report.n_heldout(), data.n_observed());
        let fold_sum: f64 = report.per_fold().iter().sum();
        assert_eq!(report.total(), fold_sum);
        assert!((report.per_pair_average() - report.total() / 15.0).abs() < 1e-15);
    }

    #[test]
    fn identical_draws_match_a_single_draw() {
        let (plan, data) = fixture();
        let one = vec![
            vec![random_draw(6, 2, 0.8, 100)],
            vec![random_draw(6, 2, 1.1, 101)],
        ];
        let three = vec![
            vec![one[0][0].clone(), one[0][0].clone(), one[0][0].clone()],
            vec![one[1][0].clone(), one[1][0].clone(), one[1][0].clone()],
        ];
        let a = lpd_hat(&plan, &data, &one).unwrap();
        let b = lpd_hat(&plan, &data, &three).unwrap();
        assert!((a.total() - b.total()).abs() < 1e-12);
    }

    #[test]
    fn draw_order_does_not_change_the_total() {
        let (plan, data) = fixture();
        let d0 = random_draw(6, 2, 0.8, 200);
        let d1 = random_draw(6, 2, 0.9, 201);
        let d2 = random_draw(6, 2, 1.2, 202);
        let fwd = vec![
            vec![d0.clone(), d1.clone(), d2.clone()],
            vec![d2.clone(), d0.clone(), d1.clone()],
        ];
        let rev = vec![
            vec![d2.clone(), d1.clone(), d0.clone()],
            vec![d1, d0, d2],
        ];
        let a = lpd_hat(&plan, &data, &fwd).unwrap();
        let b = lpd_hat(&plan, &data, &rev).unwrap();
        assert!((a.total() - b.total()).abs() < 1e-12);
    }

    #[test]
    fn lpd_input_validation() {
        let (plan, data) = fixture();
        let draw = random_draw(6, 2, 1.0, 50);

        // empty chain for fold 1
        let empty = vec![vec![draw.clone()], vec![]];
        assert!(lpd_hat(&plan, &data, &empty).is_err());

        // wrong number of folds
        let short = vec![vec![draw.clone()]];
        assert!(lpd_hat(&plan, &data, &short).is_err());

        // draw with the wrong item count
        let bad = vec![vec![draw.clone()], vec![random_draw(5, 2, 1.0, 51)]];
        assert!(lpd_hat(&plan, &data, &bad).is_err());

        // plan built for different data
        let other = all_observed_data(7, 1);
        assert!(lpd_hat(&plan, &other, &[vec![draw.clone()], vec![draw]]).is_err());
    }

    #[test]
    fn dimension_table_maximizes_and_breaks_ties_low() {
        fn report(total: f64) -> LpdReport {
            LpdReport {
                per_fold: vec![total],
                total,
                n_heldout: 1,
            }
        }
        let mut table = DimensionTable::new();
        assert!(table.best().is_none());
        table.insert(2, report(-5.0));
        table.insert(3, report(-3.0));
        table.insert(4, report(-4.0));
        assert_eq!(table.best(), Some(3));

        let mut tied = DimensionTable::new();
        tied.insert(4, report(-1.0));
        tied.insert(2, report(-1.0));
        assert_eq!(tied.best(), Some(2));
        assert_eq!(tied.entries().count(), 2);
    }
}
