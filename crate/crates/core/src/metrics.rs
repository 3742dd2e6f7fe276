//! Detection and classification metrics.
//!
//! Rates with a zero denominator are undefined: they are returned as errors
//! (binary case) or left out of macro means and flagged (one-vs-rest case),
//! never reported as zero.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

fn ratio(num: u64, den: u64, what: &str) -> Result<f64> {
    if den == 0 {
        return Err(Error::Degenerate(format!("{what} has a zero denominator")));
    }
    Ok(num as f64 / den as f64)
}

/// `2 TP / (2 TP + FP + FN)`.
pub fn f1(c: &ConfusionCounts) -> Result<f64> {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, "F1")
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    ratio(c.tp + c.tn, c.total(), "accuracy")
}

pub fn sensitivity(c: &ConfusionCounts) -> Result<f64> {
    ratio(c.tp, c.tp + c.fn_, "sensitivity")
}

pub fn specificity(c: &ConfusionCounts) -> Result<f64> {
    ratio(c.tn, c.tn + c.fp, "specificity")
}

/// `(accuracy, sensitivity, specificity)`; fails if any is undefined.
pub fn binary_rates(c: &ConfusionCounts) -> Result<(f64, f64, f64)> {
    Ok((accuracy(c)?, sensitivity(c)?, specificity(c)?))
}

/// Square confusion matrix, rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiClassConfusion {
    counts: Vec<Vec<u64>>,
}

impl MultiClassConfusion {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|r| r.len() != n) {
            return Err(Error::Dim(
                "confusion matrix must be square and non-empty".into(),
            ));
        }
        Ok(MultiClassConfusion { counts })
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Dim("truth and prediction lengths differ".into()));
        }
        let mut counts = vec![vec![0; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes {
                return Err(Error::Label(t));
            }
            if p >= classes {
                return Err(Error::Label(p));
            }
            counts[t][p] += 1;
        }
        Ok(MultiClassConfusion { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Trace over total.
    pub fn plain_accuracy(&self) -> Result<f64> {
        let diag = (0..self.classes()).map(|k| self.counts[k][k]).sum();
        ratio(diag, self.total(), "accuracy")
    }

    /// Class `k` against the rest.
    pub fn one_vs_rest(&self, k: usize) -> ConfusionCounts {
        let n = self.classes();
        let tp = self.counts[k][k];
        let fn_: u64 = (0..n).filter(|&j| j != k).map(|j| self.counts[k][j]).sum();
        let fp: u64 = (0..n).filter(|&i| i != k).map(|i| self.counts[i][k]).sum();
        ConfusionCounts {
            tp,
            tn: self.total() - tp - fn_ - fp,
            fp,
            fn_,
        }
    }

    pub fn to_csv(&self, names: &[&str]) -> String {
        let mut out = String::from("true\\predicted");
        for k in 0..self.classes() {
            let _ = write!(out, ",{}", names.get(k).copied().unwrap_or("?"));
        }
        out.push('\n');
        for (k, row) in self.counts.iter().enumerate() {
            out.push_str(names.get(k).copied().unwrap_or("?"));
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRates {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvrRates {
    pub per_class: Vec<ClassRates>,
    pub macro_accuracy: Option<f64>,
    pub macro_sensitivity: Option<f64>,
    pub macro_specificity: Option<f64>,
    /// `(class, rate name)` for every rate left out of the macro means.
    pub undefined: Vec<(usize, &'static str)>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Per-class one-vs-rest rates and their unweighted means.
pub fn ovr_rates(m: &MultiClassConfusion) -> Result<OvrRates> {
    if m.total() == 0 {
        return Err(Error::Degenerate("confusion matrix is empty".into()));
    }
    let mut undefined = Vec::new();
    let per_class: Vec<ClassRates> = (0..m.classes())
        .map(|k| {
            let c = m.one_vs_rest(k);
            let mut rate = |r: Result<f64>, name| r.map_err(|_| undefined.push((k, name))).ok();
            ClassRates {
                accuracy: rate(accuracy(&c), "accuracy"),
                sensitivity: rate(sensitivity(&c), "sensitivity"),
                specificity: rate(specificity(&c), "specificity"),
            }
        })
        .collect();
    Ok(OvrRates {
        macro_accuracy: mean_defined(per_class.iter().map(|r| r.accuracy)),
        macro_sensitivity: mean_defined(per_class.iter().map(|r| r.sensitivity)),
        macro_specificity: mean_defined(per_class.iter().map(|r| r.specificity)),
        per_class,
        undefined,
    })
}

/// Class scores and true label of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub scores: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC of `(score, is_positive)` pairs. Equal scores move together, so a
/// block of ties contributes one diagonal segment.
pub fn roc_binary(scored: &[(f64, bool)]) -> Result<RocCurve> {
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate(
            "ROC needs at least one positive and one negative".into(),
        ));
    }
    if scored.iter().any(|s| !s.0.is_finite()) {
        return Err(Error::Degenerate("non-finite score".into()));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().expect("starts at origin");
        let (x1, y1) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocCurve { points, auc })
}

/// One-vs-rest ROC for `positive_class`, scoring by that class's probability.
pub fn roc_curve(samples: &[ScoredSample], positive_class: usize) -> Result<RocCurve> {
    let scored: Vec<(f64, bool)> = samples
        .iter()
        .map(|s| {
            s.scores
                .get(positive_class)
                .map(|&p| (p, s.label == positive_class))
                .ok_or(Error::Label(positive_class))
        })
        .collect::<Result<_>>()?;
    roc_binary(&scored)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvrAuc {
    pub macro_auc: f64,
    pub micro_auc: f64,
    pub per_class: Vec<RocCurve>,
    pub micro: RocCurve,
}

/// Macro AUC averages per-class curves; micro AUC pools every
/// `(sample, class)` pair as one binary instance.
pub fn ovr_auc(samples: &[ScoredSample], classes: usize) -> Result<OvrAuc> {
    let per_class: Vec<RocCurve> = (0..classes)
        .map(|k| roc_curve(samples, k))
        .collect::<Result<_>>()?;
    let pooled: Vec<(f64, bool)> = samples
        .iter()
        .flat_map(|s| (0..classes).map(move |k| (s.scores[k], s.label == k)))
        .collect();
    let micro = roc_binary(&pooled)?;
    Ok(OvrAuc {
        macro_auc: per_class.iter().map(|c| c.auc).sum::<f64>() / classes as f64,
        micro_auc: micro.auc,
        per_class,
        micro,
    })
}

impl OvrAuc {
    /// `curve,fpr,tpr` rows for each class curve and the pooled curve.
    pub fn roc_csv(&self, names: &[&str]) -> String {
        let mut out = String::from("curve,fpr,tpr\n");
        let named = self
            .per_class
            .iter()
            .enumerate()
            .map(|(k, c)| (names.get(k).copied().unwrap_or("?"), c))
            .chain(std::iter::once(("micro", &self.micro)));
        for (name, curve) in named {
            for (x, y) in &curve.points {
                let _ = writeln!(out, "{name},{x},{y}");
            }
        }
        out
    }

    /// `curve,auc` rows, one per class plus `macro` and `micro`.
    pub fn summary_csv(&self, names: &[&str]) -> String {
        let mut out = String::from("curve,auc\n");
        for (k, c) in self.per_class.iter().enumerate() {
            let _ = writeln!(out, "{},{}", names.get(k).copied().unwrap_or("?"), c.auc);
        }
        let _ = writeln!(out, "macro,{}", self.macro_auc);
        let _ = writeln!(out, "micro,{}", self.micro_auc);
        out
    }
}

/// Seeded fold index per item; fold sizes differ by at most one.
pub fn kfold_split(n_items: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || n_items < k {
        return Err(Error::Config(format!(
            "cannot split {n_items} items into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n_items];
    for (rank, &item) in order.iter().enumerate() {
        folds[item] = rank % k;
    }
    Ok(folds)
}
