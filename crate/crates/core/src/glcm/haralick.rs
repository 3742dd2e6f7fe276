//! Haralick texture descriptors of a normalized co-occurrence matrix.
//!
//! Gray levels are indexed from 0. Entropies use the natural log with
//! `0 ln 0 = 0`. When either marginal has zero variance the correlation is
//! reported as 1.

use nalgebra::{DMatrix, SymmetricEigen};

use super::Glcm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Descriptor {
    Energy,
    Contrast,
    Correlation,
    SumOfSquaresVariance,
    Homogeneity,
    SumAverage,
    SumVariance,
    SumEntropy,
    Entropy,
    DifferenceVariance,
    DifferenceEntropy,
    InfoCorrelation1,
    InfoCorrelation2,
    MaxCorrelationCoefficient,
    Autocorrelation,
    Dissimilarity,
}

impl Descriptor {
    pub const ALL: [Descriptor; 16] = [
        Descriptor::Energy,
        Descriptor::Contrast,
        Descriptor::Correlation,
        Descriptor::SumOfSquaresVariance,
        Descriptor::Homogeneity,
        Descriptor::SumAverage,
        Descriptor::SumVariance,
        Descriptor::SumEntropy,
        Descriptor::Entropy,
        Descriptor::DifferenceVariance,
        Descriptor::DifferenceEntropy,
        Descriptor::InfoCorrelation1,
        Descriptor::InfoCorrelation2,
        Descriptor::MaxCorrelationCoefficient,
        Descriptor::Autocorrelation,
        Descriptor::Dissimilarity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Descriptor::Energy => "energy",
            Descriptor::Contrast => "contrast",
            Descriptor::Correlation => "correlation",
            Descriptor::SumOfSquaresVariance => "sum_of_squares_variance",
            Descriptor::Homogeneity => "homogeneity",
            Descriptor::SumAverage => "sum_average",
            Descriptor::SumVariance => "sum_variance",
            Descriptor::SumEntropy => "sum_entropy",
            Descriptor::Entropy => "entropy",
            Descriptor::DifferenceVariance => "difference_variance",
            Descriptor::DifferenceEntropy => "difference_entropy",
            Descriptor::InfoCorrelation1 => "info_correlation_1",
            Descriptor::InfoCorrelation2 => "info_correlation_2",
            Descriptor::MaxCorrelationCoefficient => "max_correlation_coefficient",
            Descriptor::Autocorrelation => "autocorrelation",
            Descriptor::Dissimilarity => "dissimilarity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Descriptor::ALL.into_iter().find(|d| d.name() == s)
    }
}

/// The 16 descriptors, indexed in [`Descriptor::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaralickVector([f64; 16]);

impl HaralickVector {
    pub fn get(&self, d: Descriptor) -> f64 {
        self.0[d as usize]
    }

    pub fn values(&self) -> &[f64; 16] {
        &self.0
    }

    pub fn select(&self, set: &[Descriptor]) -> Vec<f64> {
        set.iter().map(|&d| self.get(d)).collect()
    }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Second-largest eigenvalue of `Q(i,j) = sum_k p(i,k) p(j,k) / (px(i) py(k))`, square-rooted.
///
/// `Q` is similar to the symmetric matrix `Dx^-1/2 P Dy^-1 P^T Dx^-1/2`, which
/// is what gets decomposed. Rows and columns with zero marginal are dropped.
fn max_correlation_coefficient(p: &[f64], px: &[f64], py: &[f64], n: usize) -> f64 {
    let rows: Vec<usize> = (0..n).filter(|&i| px[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&k| py[k] > 0.0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return 0.0;
    }
    let m = DMatrix::from_fn(rows.len(), rows.len(), |a, b| {
        let (i, j) = (rows[a], rows[b]);
        let s: f64 = cols
            .iter()
            .map(|&k| p[i * n + k] * p[j * n + k] / py[k])
            .sum();
        s / (px[i] * px[j]).sqrt()
    });
    let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    // roundoff-level eigenvalues mean Q has rank one
    if eig[1] <= 1e-12 * eig[0] {
        0.0
    } else {
        eig[1].sqrt()
    }
}

/// Computes all 16 descriptors of a non-empty matrix.
pub fn haralick(g: &Glcm) -> Result<HaralickVector> {
    if g.is_empty() {
        return Err(Error::EmptyGlcm);
    }
    let n = g.levels;
    let p = &g.probs;

    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut p_sum = vec![0.0; 2 * n - 1];
    let mut p_diff = vec![0.0; n];
    let mut energy = 0.0;
    let mut contrast = 0.0;
    let mut homogeneity = 0.0;
    let mut entropy = 0.0;
    let mut autocorrelation = 0.0;
    let mut dissimilarity = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = p[i * n + j];
            let d = i.abs_diff(j);
            px[i] += v;
            py[j] += v;
            p_sum[i + j] += v;
            p_diff[d] += v;
            energy += v * v;
            contrast += (d * d) as f64 * v;
            homogeneity += v / (1.0 + (d * d) as f64);
            entropy -= plogp(v);
            autocorrelation += (i * j) as f64 * v;
            dissimilarity += d as f64 * v;
        }
    }

    let mean = |m: &[f64]| m.iter().enumerate().map(|(i, v)| i as f64 * v).sum::<f64>();
    let var = |m: &[f64], mu: f64| {
        m.iter()
            .enumerate()
            .map(|(i, v)| (i as f64 - mu).powi(2) * v)
            .sum::<f64>()
    };
    let mu_x = mean(&px);
    let mu_y = mean(&py);
    let var_x = var(&px, mu_x);
    let var_y = var(&py, mu_y);
    let correlation = if var_x > 0.0 && var_y > 0.0 {
        (autocorrelation - mu_x * mu_y) / (var_x * var_y).sqrt()
    } else {
        1.0
    };
    let sum_average = mean(&p_sum);
    let sum_variance = var(&p_sum, sum_average);
    let sum_entropy = -p_sum.iter().map(|&v| plogp(v)).sum::<f64>();
    let diff_mean = mean(&p_diff);
    let difference_variance = var(&p_diff, diff_mean);
    let difference_entropy = -p_diff.iter().map(|&v| plogp(v)).sum::<f64>();

    let hx = -px.iter().map(|&v| plogp(v)).sum::<f64>();
    let hy = -py.iter().map(|&v| plogp(v)).sum::<f64>();
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let q = px[i] * py[j];
            if q > 0.0 {
                hxy1 -= p[i * n + j] * q.ln();
                hxy2 -= q * q.ln();
            }
        }
    }
    let hmax = hx.max(hy);
    let info1 = if hmax > 0.0 {
        (entropy - hxy1) / hmax
    } else {
        0.0
    };
    let info2 = (1.0 - (-2.0 * (hxy2 - entropy)).exp()).max(0.0).sqrt();

    Ok(HaralickVector([
        energy,
        contrast,
        correlation,
        var_x,
        homogeneity,
        sum_average,
        sum_variance,
        sum_entropy,
        entropy,
        difference_variance,
        difference_entropy,
        info1,
        info2,
        max_correlation_coefficient(p, &px, &py, n),
        autocorrelation,
        dissimilarity,
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glcm::Direction;

    fn glcm(levels: usize, probs: &[f64]) -> Glcm {
        // counts scaled so probs are exactly reproduced
        let counts = probs.iter().map(|&p| (p * 1e6).round() as u64).collect();
        Glcm {
            levels,
            direction: Direction::new(0, 0, 1),
            distance: 1,
            symmetric: false,
            counts,
            probs: probs.to_vec(),
        }
    }

    #[test]
    fn diagonal_half_half() {
        let h = haralick(&glcm(2, &[0.5, 0.0, 0.0, 0.5])).unwrap();
        assert!((h.get(Descriptor::Energy) - 0.5).abs() < 1e-12);
        assert!(h.get(Descriptor::Contrast).abs() < 1e-12);
        assert!((h.get(Descriptor::Entropy) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((h.get(Descriptor::Homogeneity) - 1.0).abs() < 1e-12);
        assert!((h.get(Descriptor::Correlation) - 1.0).abs() < 1e-12);
        assert!((h.get(Descriptor::MaxCorrelationCoefficient) - 1.0).abs() < 1e-12);
        assert!(h.get(Descriptor::Dissimilarity).abs() < 1e-12);
    }

    #[test]
    fn one_hot() {
        let mut p = vec![0.0; 9];
        p[4] = 1.0;
        let h = haralick(&glcm(3, &p)).unwrap();
        assert_eq!(h.get(Descriptor::Energy), 1.0);
        assert_eq!(h.get(Descriptor::Entropy), 0.0);
        assert_eq!(h.get(Descriptor::MaxCorrelationCoefficient), 0.0);
        assert_eq!(h.get(Descriptor::InfoCorrelation1), 0.0);
        assert_eq!(h.get(Descriptor::SumAverage), 2.0);
    }

    #[test]
    fn uniform_two_level() {
        let h = haralick(&glcm(2, &[0.25; 4])).unwrap();
        assert!((h.get(Descriptor::Energy) - 0.25).abs() < 1e-12);
        assert!((h.get(Descriptor::Contrast) - 0.5).abs() < 1e-12);
        assert!((h.get(Descriptor::Entropy) - 4f64.ln()).abs() < 1e-12);
        // independent marginals
        assert!(h.get(Descriptor::Correlation).abs() < 1e-12);
        assert!(h.get(Descriptor::InfoCorrelation1).abs() < 1e-12);
        assert!(h.get(Descriptor::InfoCorrelation2).abs() < 1e-12);
        assert!(h.get(Descriptor::MaxCorrelationCoefficient).abs() < 1e-12);
    }

    #[test]
    fn empty_matrix_errors() {
        assert!(matches!(
            haralick(&glcm(2, &[0.0; 4])),
            Err(Error::EmptyGlcm)
        ));
    }

    #[test]
    fn names_roundtrip() {
        for d in Descriptor::ALL {
            assert_eq!(Descriptor::parse(d.name()), Some(d));
        }
    }
}
