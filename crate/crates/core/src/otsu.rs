//! Multilevel Otsu thresholding.
//!
//! A threshold vector `t_1 < ... < t_m` splits the gray range into `m + 1`
//! classes; value `v` belongs to class `k` iff `t_k <= v < t_{k+1}` (with
//! `t_0 = 0`, `t_{m+1} = L`). The objective is the between-class variance
//! `sum_k w_k (mu_k - mu_T)^2`. Empty classes contribute nothing and report a
//! mean of zero.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default cap on the number of threshold combinations the exhaustive search will visit.
pub const DEFAULT_BUDGET: u128 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn new(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Histogram { counts, total }
    }

    /// Counts `values` into `levels` bins; values must be `< levels`.
    pub fn from_values(values: &[u16], levels: usize) -> Self {
        let mut counts = vec![0u64; levels];
        for &v in values {
            counts[v as usize] += 1;
        }
        Histogram::new(counts)
    }

    /// Like [`Histogram::from_values`] but only counts elements where `mask` is set.
    pub fn from_masked(values: &[u16], mask: &[bool], levels: usize) -> Self {
        let mut counts = vec![0u64; levels];
        for (&v, _) in values.iter().zip(mask).filter(|(_, &m)| m) {
            counts[v as usize] += 1;
        }
        Histogram::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn levels(&self) -> usize {
        self.counts.len()
    }

    /// Probability vector `p_i = n_i / N`.
    pub fn normalize(&self) -> Result<Vec<f64>> {
        if self.total == 0 {
            return Err(Error::Histogram("histogram is empty (N = 0)".into()));
        }
        let n = self.total as f64;
        Ok(self.counts.iter().map(|&c| c as f64 / n).collect())
    }
}

/// Strictly increasing cut points, each in `[1, L-1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ThresholdVector(Vec<usize>);

impl ThresholdVector {
    pub fn new(cuts: Vec<usize>, levels: usize) -> Result<Self> {
        if cuts.is_empty() {
            return Err(Error::Threshold("at least one cut is required".into()));
        }
        if let Some(&c) = cuts.iter().find(|&&c| c < 1 || c >= levels) {
            return Err(Error::Threshold(format!(
                "cut {c} outside [1, {}]",
                levels.saturating_sub(1)
            )));
        }
        if cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Threshold(format!(
                "cuts {cuts:?} are not strictly increasing"
            )));
        }
        Ok(ThresholdVector(cuts))
    }

    pub fn cuts(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Class index of gray value `v`.
    pub fn class_of(&self, v: usize) -> usize {
        self.0.partition_point(|&t| t <= v)
    }

    /// Labels every value by class index.
    pub fn label(&self, values: &[u16]) -> Vec<u8> {
        values
            .iter()
            .map(|&v| self.class_of(v as usize) as u8)
            .collect()
    }
}

/// Class statistics for one threshold vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OtsuPartition {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub global_mean: f64,
    pub fitness: f64,
}

fn class_bounds(cuts: &[usize], levels: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    let starts = std::iter::once(0).chain(cuts.iter().copied());
    let ends = cuts.iter().copied().chain(std::iter::once(levels));
    starts.zip(ends)
}

/// Evaluates the between-class variance of `h` under `t`.
pub fn evaluate(h: &Histogram, t: &ThresholdVector) -> Result<OtsuPartition> {
    let p = h.normalize()?;
    ThresholdVector::new(t.cuts().to_vec(), h.levels())?;
    let mut weights = Vec::with_capacity(t.len() + 1);
    let mut means = Vec::with_capacity(t.len() + 1);
    for (lo, hi) in class_bounds(t.cuts(), h.levels()) {
        let w: f64 = p[lo..hi].iter().sum();
        let mu = if w > 0.0 {
            (lo..hi).map(|i| i as f64 * p[i] / w).sum()
        } else {
            0.0
        };
        weights.push(w);
        means.push(mu);
    }
    let global_mean: f64 = weights.iter().zip(&means).map(|(w, m)| w * m).sum();
    let fitness = weights
        .iter()
        .zip(&means)
        .filter(|(&w, _)| w > 0.0)
        .map(|(w, m)| w * (m - global_mean).powi(2))
        .sum();
    Ok(OtsuPartition {
        weights,
        means,
        global_mean,
        fitness,
    })
}

/// Global variance `sum_i p_i (i - mu_T)^2`.
pub fn total_variance(h: &Histogram) -> Result<f64> {
    let p = h.normalize()?;
    let mu: f64 = p.iter().enumerate().map(|(i, pi)| i as f64 * pi).sum();
    Ok(p.iter()
        .enumerate()
        .map(|(i, pi)| pi * (i as f64 - mu).powi(2))
        .sum())
}

/// Within-class variance `sum_k w_k sigma_k^2`, i.e. `sum_k sum_{i in C_k} p_i (i - mu_k)^2`.
pub fn within_class_variance(h: &Histogram, t: &ThresholdVector) -> Result<f64> {
    let part = evaluate(h, t)?;
    let p = h.normalize()?;
    Ok(class_bounds(t.cuts(), h.levels())
        .zip(&part.means)
        .map(|((lo, hi), mu)| {
            (lo..hi)
                .map(|i| p[i] * (i as f64 - mu).powi(2))
                .sum::<f64>()
        })
        .sum())
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact: acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul(u128::from(n - i)) {
            Some(v) => v / u128::from(i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Allocation-free between-class variance from raw counts; used by the search loop.
fn fitness_direct(p: &[f64], cuts: &[usize], global_mean: f64) -> f64 {
    class_bounds(cuts, p.len())
        .map(|(lo, hi)| {
            let mut w = 0.0;
            let mut s = 0.0;
            for (i, &pi) in p.iter().enumerate().take(hi).skip(lo) {
                w += pi;
                s += i as f64 * pi;
            }
            if w > 0.0 {
                let mu = s / w;
                w * (mu - global_mean).powi(2)
            } else {
                0.0
            }
        })
        .sum()
}

/// Advances `cuts` to the next combination in lexicographic order. Values stay in `[lo, max]`.
fn next_combination(cuts: &mut [usize], max: usize) -> bool {
    let m = cuts.len();
    for j in (0..m).rev() {
        if cuts[j] < max - (m - 1 - j) {
            cuts[j] += 1;
            for k in j + 1..m {
                cuts[k] = cuts[k - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exhaustive search over every `m`-cut vector.
///
/// Returns the lexicographically smallest vector attaining the maximum
/// fitness. The search is split across threads by first cut; the reduction
/// is order-independent, so the answer does not depend on the thread count.
pub fn exhaustive_optimize(
    h: &Histogram,
    m: usize,
    budget: u128,
) -> Result<(ThresholdVector, f64)> {
    let levels = h.levels();
    if m == 0 || m >= levels {
        return Err(Error::Threshold(format!(
            "cannot place {m} cuts in {levels} levels"
        )));
    }
    let combinations = binomial(levels as u64 - 1, m as u64);
    if combinations > budget {
        return Err(Error::Budget {
            combinations,
            budget,
        });
    }
    let p = h.normalize()?;
    let global_mean: f64 = p.iter().enumerate().map(|(i, pi)| i as f64 * pi).sum();
    let max = levels - 1;

    let best = (1..=max - (m - 1))
        .into_par_iter()
        .map(|first| {
            let mut cuts: Vec<usize> = (first..first + m).collect();
            let mut best = (fitness_direct(&p, &cuts, global_mean), cuts.clone());
            if m > 1 {
                while next_combination(&mut cuts[1..], max) {
                    let f = fitness_direct(&p, &cuts, global_mean);
                    if f > best.0 {
                        best = (f, cuts.clone());
                    }
                }
            }
            best
        })
        .reduce_with(|a, b| {
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }
        })
        .expect("at least one combination");
    Ok((ThresholdVector(best.1), best.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn spikes(levels: usize, spikes: &[(usize, u64)]) -> Histogram {
        let mut c = vec![0; levels];
        for &(at, n) in spikes {
            c[at] = n;
        }
        Histogram::new(c)
    }

    fn random_hist(rng: &mut ChaCha8Rng, levels: usize) -> Histogram {
        Histogram::new((0..levels).map(|_| rng.gen_range(0..1000)).collect())
    }

    /// Exact rational evaluation of the between-class variance with integer arithmetic.
    fn exact_fitness(counts: &[u64], cuts: &[usize]) -> f64 {
        let n: i128 = counts.iter().map(|&c| c as i128).sum();
        let s: i128 = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| i as i128 * c as i128)
            .sum();
        let mut bounds = vec![0];
        bounds.extend_from_slice(cuts);
        bounds.push(counts.len());
        let mut total = 0.0;
        for w in bounds.windows(2) {
            let nk: i128 = counts[w[0]..w[1]].iter().map(|&c| c as i128).sum();
            if nk == 0 {
                continue;
            }
            let sk: i128 = (w[0]..w[1]).map(|i| i as i128 * counts[i] as i128).sum();
            // w_k (mu_k - mu_T)^2 = (sk*n - s*nk)^2 / (nk * n^3)
            let num = sk * n - s * nk;
            total += (num as f64 * num as f64) / (nk as f64 * (n as f64).powi(3));
        }
        total
    }

    #[test]
    fn normalize_examples() {
        let h = Histogram::new(vec![2, 1, 1, 0]);
        assert_eq!(h.normalize().unwrap(), vec![0.5, 0.25, 0.25, 0.0]);
        assert_eq!(
            spikes(4, &[(2, 7)]).normalize().unwrap(),
            vec![0.0, 0.0, 1.0, 0.0]
        );
        assert!(matches!(
            Histogram::new(vec![0; 4]).normalize(),
            Err(Error::Histogram(_))
        ));
    }

    #[test]
    fn threshold_vector_validation() {
        assert!(ThresholdVector::new(vec![3, 3], 8).is_err());
        assert!(ThresholdVector::new(vec![4, 2], 8).is_err());
        assert!(ThresholdVector::new(vec![0], 8).is_err());
        assert!(ThresholdVector::new(vec![8], 8).is_err());
        let t = ThresholdVector::new(vec![1, 7], 8).unwrap();
        assert_eq!(t.class_of(0), 0);
        assert_eq!(t.class_of(1), 1);
        assert_eq!(t.class_of(6), 1);
        assert_eq!(t.class_of(7), 2);
    }

    #[test]
    fn two_spike_evaluation() {
        let h = spikes(256, &[(10, 50), (200, 50)]);
        let part = evaluate(&h, &ThresholdVector::new(vec![100], 256).unwrap()).unwrap();
        assert_eq!(part.weights, vec![0.5, 0.5]);
        assert_eq!(part.means, vec![10.0, 200.0]);
        assert_eq!(part.global_mean, 105.0);
        assert!((part.fitness - 9025.0).abs() < 1e-9);
        assert!((total_variance(&h).unwrap() - 9025.0).abs() < 1e-9);
    }

    #[test]
    fn single_spike_has_zero_fitness() {
        let h = spikes(64, &[(20, 13)]);
        for cuts in [vec![5], vec![20], vec![21, 40], vec![1, 2, 63]] {
            let t = ThresholdVector::new(cuts, 64).unwrap();
            assert_eq!(evaluate(&h, &t).unwrap().fitness, 0.0);
        }
        assert_eq!(total_variance(&h).unwrap(), 0.0);
    }

    #[test]
    fn random_16_bin_matches_exact_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..20 {
            let h = random_hist(&mut rng, 16);
            let t = ThresholdVector::new(vec![5, 11], 16).unwrap();
            let got = evaluate(&h, &t).unwrap().fitness;
            let want = exact_fitness(h.counts(), t.cuts());
            assert!(
                (got - want).abs() <= 1e-10 * want.max(1.0),
                "{got} vs {want}"
            );
        }
    }

    #[test]
    fn empty_class_contributes_nothing() {
        let h = spikes(16, &[(2, 5), (12, 5)]);
        let part = evaluate(&h, &ThresholdVector::new(vec![5, 8], 16).unwrap()).unwrap();
        assert_eq!(part.weights[1], 0.0);
        assert_eq!(part.means[1], 0.0);
        assert!((part.fitness - 25.0).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_two_spike_picks_smallest_cut() {
        let h = spikes(256, &[(10, 50), (200, 50)]);
        let (t, f) = exhaustive_optimize(&h, 1, DEFAULT_BUDGET).unwrap();
        assert_eq!(t.cuts(), &[11]);
        assert!((f - 9025.0).abs() < 1e-9);
    }

    #[test]
    fn exhaustive_three_spikes_separates_them() {
        let h = spikes(256, &[(5, 30), (50, 40), (120, 30)]);
        let (t, _) = exhaustive_optimize(&h, 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(t.cuts(), &[6, 51]);
        let labels = t.label(&[5, 50, 120]);
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn exhaustive_budget() {
        let h = spikes(256, &[(10, 1)]);
        let err = exhaustive_optimize(&h, 5, DEFAULT_BUDGET).unwrap_err();
        match err {
            Error::Budget { combinations, .. } => assert_eq!(combinations, binomial(255, 5)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(binomial(255, 5), 8_637_487_551);
        assert_eq!(binomial(63, 2), 1953);
    }

    #[test]
    fn exhaustive_matches_brute_force_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let h = random_hist(&mut rng, 24);
            let mut best = (f64::MIN, vec![]);
            for a in 1..24 {
                for b in a + 1..24 {
                    let f = exact_fitness(h.counts(), &[a, b]);
                    if f > best.0 + 1e-9 {
                        best = (f, vec![a, b]);
                    }
                }
            }
            let (t, f) = exhaustive_optimize(&h, 2, DEFAULT_BUDGET).unwrap();
            assert!((f - best.0).abs() < 1e-9);
            assert_eq!(t.cuts(), best.1.as_slice());
        }
    }

    #[test]
    fn combination_enumeration_counts() {
        let mut cuts = vec![1, 2, 3];
        let mut n = 1;
        while next_combination(&mut cuts, 9) {
            n += 1;
        }
        assert_eq!(n as u128, binomial(9, 3));
    }

    fn hist_strategy() -> impl Strategy<Value = (Vec<u64>, Vec<usize>)> {
        (
            proptest::collection::vec(0u64..500, 32),
            proptest::collection::btree_set(1usize..32, 1..4),
        )
            .prop_filter("non-empty", |(c, _)| c.iter().sum::<u64>() > 0)
            .prop_map(|(c, s)| (c, s.into_iter().collect()))
    }

    proptest! {
        #[test]
        fn variance_decomposition((counts, cuts) in hist_strategy()) {
            let h = Histogram::new(counts);
            let t = ThresholdVector::new(cuts, 32).unwrap();
            let between = evaluate(&h, &t).unwrap().fitness;
            let within = within_class_variance(&h, &t).unwrap();
            prop_assert!((between + within - total_variance(&h).unwrap()).abs() <= 1e-9);
        }

        #[test]
        fn global_mean_identity((counts, cuts) in hist_strategy()) {
            let h = Histogram::new(counts);
            let t = ThresholdVector::new(cuts, 32).unwrap();
            let direct: f64 = h.normalize().unwrap().iter().enumerate().map(|(i, p)| i as f64 * p).sum();
            prop_assert!((evaluate(&h, &t).unwrap().global_mean - direct).abs() <= 1e-12 * direct.max(1.0));
        }

        #[test]
        fn fitness_scale_invariant((counts, cuts) in hist_strategy(), c in 2u64..50) {
            let h = Histogram::new(counts.clone());
            let scaled = Histogram::new(counts.iter().map(|&n| n * c).collect());
            let t = ThresholdVector::new(cuts, 32).unwrap();
            let a = evaluate(&h, &t).unwrap().fitness;
            let b = evaluate(&scaled, &t).unwrap().fitness;
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn exhaustive_dominates_samples((counts, cuts) in hist_strategy()) {
            let h = Histogram::new(counts);
            let t = ThresholdVector::new(cuts, 32).unwrap();
            let (_, best) = exhaustive_optimize(&h, t.len(), DEFAULT_BUDGET).unwrap();
            prop_assert!(best >= evaluate(&h, &t).unwrap().fitness - 1e-9);
        }
    }
}
