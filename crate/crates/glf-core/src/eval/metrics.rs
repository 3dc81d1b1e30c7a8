//! Representation-quality metrics: mean-classifier cross-entropy, conditional
//! variance, alignment/uniformity, and class-separation ratios.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::loss::uniformity_sphere;

fn class_means(feats: &Tensor, labels: &[usize]) -> Result<(Vec<Vec<f64>>, usize)> {
    let n = feats.rows();
    let d = feats.cols();
    if n != labels.len() || n == 0 {
        return Err(Error::Dimension("features do not align with labels".into()));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..d {
            sums[l][j] += feats.data()[i * d + j];
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Degenerate(format!("class {missing} has no samples")));
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    Ok((sums, k))
}

/// Mean cross-entropy of the class-mean classifier:
/// `mean_i -log softmax(f_i^T μ)_y_i` with means from the same split.
pub fn mean_classifier_ce(feats: &Tensor, labels: &[usize]) -> Result<f64> {
    let (means, k) = class_means(feats, labels)?;
    let n = feats.rows();
    let d = feats.cols();
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let f = &feats.data()[i * d..(i + 1) * d];
        let logits: Vec<f64> = (0..k)
            .map(|c| f.iter().zip(&means[c]).map(|(a, b)| a * b).sum())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        total += lse - logits[label];
    }
    Ok(total / n as f64)
}

/// `E_y E_{x|y} ‖f(x) - μ_y‖²` with empirical class means, class-frequency
/// weighted (equivalently: the mean squared distance of each sample to its
/// class mean).
pub fn conditional_variance(feats: &Tensor, labels: &[usize]) -> Result<f64> {
    let (means, _) = class_means(feats, labels)?;
    let n = feats.rows();
    let d = feats.cols();
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let f = &feats.data()[i * d..(i + 1) * d];
        total += f
            .iter()
            .zip(&means[label])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / n as f64)
}

/// Fraction of total variance that is within-class (0 = fully collapsed
/// classes, 1 = class labels explain nothing).
pub fn intra_compactness(feats: &Tensor, labels: &[usize]) -> Result<f64> {
    let cond = conditional_variance(feats, labels)?;
    let n = feats.rows();
    let d = feats.cols();
    let mut global = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            global[j] += feats.data()[i * d + j];
        }
    }
    for v in &mut global {
        *v /= n as f64;
    }
    let mut total = 0.0;
    for i in 0..n {
        let f = &feats.data()[i * d..(i + 1) * d];
        total += f
            .iter()
            .zip(&global)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(cond / (total / n as f64 + 1e-12))
}

/// Minimum distance between class means divided by the within-class scale
/// `sqrt(conditional_variance + 1e-12)`.
pub fn separability(feats: &Tensor, labels: &[usize]) -> Result<f64> {
    let (means, k) = class_means(feats, labels)?;
    if k < 2 {
        return Err(Error::Degenerate(
            "separability needs at least two classes".into(),
        ));
    }
    let mut min_dist = f64::INFINITY;
    for a in 0..k {
        for b in (a + 1)..k {
            let dist: f64 = means[a]
                .iter()
                .zip(&means[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            min_dist = min_dist.min(dist);
        }
    }
    let cond = conditional_variance(feats, labels)?;
    Ok(min_dist / (cond + 1e-12).sqrt())
}

/// `(alignment, uniformity)`: mean squared positive-pair distance and the
/// Gaussian-kernel potential at t = 2 over the pooled views. Rows must be
/// unit-normalized.
pub fn alignment_uniformity(z1: &Tensor, z2: &Tensor) -> Result<(f64, f64)> {
    if z1.shape() != z2.shape() || z1.shape().len() != 2 {
        return Err(Error::Dimension("views must be paired m x d".into()));
    }
    let m = z1.rows();
    let d = z1.cols();
    let mut alignment = 0.0;
    for i in 0..m {
        let a = &z1.data()[i * d..(i + 1) * d];
        let b = &z2.data()[i * d..(i + 1) * d];
        alignment += a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
    }
    alignment /= m as f64;
    let pooled = Tensor::concat_rows(&[&z1.detach(), &z2.detach()])?;
    let uniformity = uniformity_sphere(&pooled, 2.0)?.scalar()?;
    Ok((alignment, uniformity))
}

/// Full metric record for one evaluation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub linear_acc: f64,
    pub knn_acc: f64,
    pub mean_ce: f64,
    pub cond_variance: f64,
    pub intra_compactness: f64,
    pub inter_separability: f64,
    pub alignment: f64,
    pub uniformity: f64,
}

impl MetricsReport {
    pub const FIELD_NAMES: [&'static str; 8] = [
        "linear_acc",
        "knn_acc",
        "mean_ce",
        "cond_variance",
        "intra_compactness",
        "inter_separability",
        "alignment",
        "uniformity",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.linear_acc,
            self.knn_acc,
            self.mean_ce,
            self.cond_variance,
            self.intra_compactness,
            self.inter_separability,
            self.alignment,
            self.uniformity,
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.all_finite() {
            return Err(Error::NonFinite {
                op: "MetricsReport",
            });
        }
        if !(0.0..=1.0).contains(&self.linear_acc) || !(0.0..=1.0).contains(&self.knn_acc) {
            return Err(Error::Domain {
                op: "MetricsReport",
                reason: "accuracies must lie in [0, 1]".into(),
            });
        }
        if self.cond_variance < 0.0 {
            return Err(Error::Domain {
                op: "MetricsReport",
                reason: "conditional variance must be non-negative".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn mean_ce_collapsed_orthogonal_clusters() {
        // K=2 orthogonal unit clusters collapsed to their means:
        // CE = log(1 + e^{-1}).
        let feats = Tensor::matrix(vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0], 4, 2).unwrap();
        let labels = vec![0, 0, 1, 1];
        let ce = mean_classifier_ce(&feats, &labels).unwrap();
        let expect = (1.0 + (-1.0f64).exp()).ln();
        assert!((ce - expect).abs() < 1e-12, "{ce} vs {expect}");
    }

    #[test]
    fn mean_ce_uninformative_features_is_log_k() {
        let feats = Tensor::matrix(vec![0.3; 12 * 2], 12, 2).unwrap();
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let ce = mean_classifier_ce(&feats, &labels).unwrap();
        assert!((ce - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mean_ce_decreases_with_scale_for_separated_means() {
        let mut rng = crate::rng::rng_from(&[61]);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let center = if c == 0 { -2.0 } else { 2.0 };
            feats.extend_from_slice(&[
                center + rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ]);
            labels.push(c);
        }
        let base = Tensor::matrix(feats.clone(), 40, 2).unwrap();
        let scaled =
            Tensor::matrix(feats.iter().map(|v| v * 3.0).collect(), 40, 2).unwrap();
        let ce_base = mean_classifier_ce(&base, &labels).unwrap();
        let ce_scaled = mean_classifier_ce(&scaled, &labels).unwrap();
        assert!(ce_scaled < ce_base);
    }

    #[test]
    fn conditional_variance_behaviors() {
        // Collapsed classes -> 0.
        let feats = Tensor::matrix(vec![1.0, 1.0, 1.0, 1.0, 5.0, 5.0, 5.0, 5.0], 4, 2).unwrap();
        let labels = vec![0, 0, 1, 1];
        assert!(conditional_variance(&feats, &labels).unwrap() < 1e-12);

        // Translation invariance.
        let mut rng = crate::rng::rng_from(&[62]);
        let data: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let a = Tensor::matrix(data.clone(), 20, 3).unwrap();
        let shifted =
            Tensor::matrix(data.iter().map(|v| v + 17.5).collect(), 20, 3).unwrap();
        let va = conditional_variance(&a, &labels).unwrap();
        let vb = conditional_variance(&shifted, &labels).unwrap();
        assert!((va - vb).abs() < 1e-9);
    }

    #[test]
    fn conditional_variance_matches_chi_square_expectation() {
        // Single class, isotropic unit Gaussian in d dims: E ≈ d.
        let mut rng = crate::rng::rng_from(&[63]);
        let d = 8;
        let n = 10_000;
        let data: Vec<f64> = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let feats = Tensor::matrix(data, n, d).unwrap();
        let labels = vec![0usize; n];
        let v = conditional_variance(&feats, &labels).unwrap();
        assert!((v - d as f64).abs() / (d as f64) < 0.05, "v = {v}");
    }

    #[test]
    fn separability_behaviors() {
        // Two point classes at distance 10: variance floor only.
        let feats = Tensor::matrix(vec![0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 10.0, 0.0], 4, 2).unwrap();
        let labels = vec![0, 0, 1, 1];
        let s = separability(&feats, &labels).unwrap();
        assert!(s > 1e5);

        // Overlapping identical distributions: ratio near zero.
        let mut rng = crate::rng::rng_from(&[64]);
        let n = 2000;
        let data: Vec<f64> = (0..n * 2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let feats = Tensor::matrix(data, n, 2).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let s = separability(&feats, &labels).unwrap();
        assert!(s < 0.2, "s = {s}");

        // Scale invariance.
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let c = i % 3;
            data.extend_from_slice(&[
                c as f64 * 4.0 + rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ]);
            labels.push(c);
        }
        let base = Tensor::matrix(data.clone(), 30, 2).unwrap();
        let scaled = Tensor::matrix(data.iter().map(|v| v * 7.0).collect(), 30, 2).unwrap();
        let sa = separability(&base, &labels).unwrap();
        let sb = separability(&scaled, &labels).unwrap();
        assert!((sa - sb).abs() < 1e-9);
    }

    #[test]
    fn alignment_extremes() {
        let z = Tensor::matrix(vec![1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        let (a, _) = alignment_uniformity(&z, &z).unwrap();
        assert_eq!(a, 0.0);
        // Antipodal unit pairs: ‖2u‖² = 4.
        let z2 = z.neg().unwrap();
        let (a, _) = alignment_uniformity(&z, &z2).unwrap();
        assert!((a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn uniformity_shares_the_loss_definition() {
        let z = Tensor::matrix(vec![1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        let (_, u) = alignment_uniformity(&z, &z).unwrap();
        let pooled = Tensor::concat_rows(&[&z, &z]).unwrap();
        let direct = uniformity_sphere(&pooled, 2.0).unwrap().scalar().unwrap();
        assert_eq!(u, direct);
    }

    #[test]
    fn missing_class_rejected() {
        let feats = Tensor::matrix(vec![0.0; 8], 4, 2).unwrap();
        assert!(mean_classifier_ce(&feats, &[0, 0, 2, 2]).is_err());
    }
}
