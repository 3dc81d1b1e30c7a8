//! k-nearest-neighbor classifier with deterministic tie handling.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KnnMetric {
    #[default]
    Euclidean,
    Cosine,
}

fn distance(a: &[f64], b: &[f64], metric: KnnMetric) -> f64 {
    match metric {
        KnnMetric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        KnnMetric::Cosine => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            1.0 - dot / (na * nb).max(1e-300)
        }
    }
}

/// Majority vote over the k nearest training rows. Vote ties break toward the
/// smallest cumulative neighbor distance, then the lowest label index.
pub fn knn_predict(
    train_feats: &Tensor,
    train_labels: &[usize],
    query: &[f64],
    k: usize,
    metric: KnnMetric,
) -> Result<usize> {
    let n = train_feats.rows();
    let d = train_feats.cols();
    if n == 0 {
        return Err(Error::Degenerate("empty training set".into()));
    }
    if k > n {
        return Err(Error::Dimension(format!(
            "k = {k} exceeds training size {n}"
        )));
    }
    let mut dists: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            (
                distance(&train_feats.data()[i * d..(i + 1) * d], query, metric),
                train_labels[i],
            )
        })
        .collect();
    dists.sort_by(|a, b| a.0.total_cmp(&b.0));
    let k_classes = train_labels.iter().max().map_or(0, |m| m + 1);
    let mut votes = vec![0usize; k_classes];
    let mut cum_dist = vec![0.0f64; k_classes];
    for &(dist, label) in dists.iter().take(k) {
        votes[label] += 1;
        cum_dist[label] += dist;
    }
    let mut best = 0usize;
    for c in 1..k_classes {
        let better = votes[c] > votes[best]
            || (votes[c] == votes[best] && cum_dist[c] < cum_dist[best]);
        if better {
            best = c;
        }
    }
    Ok(best)
}

/// Top-1 accuracy of the k-NN vote over a labeled test set.
pub fn knn_classify(
    train_feats: &Tensor,
    train_labels: &[usize],
    test_feats: &Tensor,
    test_labels: &[usize],
    k: usize,
    metric: KnnMetric,
) -> Result<f64> {
    if train_feats.rows() != train_labels.len() || test_feats.rows() != test_labels.len() {
        return Err(Error::Dimension("features do not align with labels".into()));
    }
    if test_labels.is_empty() {
        return Err(Error::Degenerate("empty test set".into()));
    }
    let d = test_feats.cols();
    let mut correct = 0usize;
    for (i, &label) in test_labels.iter().enumerate() {
        let query = &test_feats.data()[i * d..(i + 1) * d];
        if knn_predict(train_feats, train_labels, query, k, metric)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test_labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn duplicated_training_point_wins() {
        // Five identical copies of the query dominate the 5-vote.
        let mut data = vec![1.0, 1.0].repeat(5);
        data.extend_from_slice(&[5.0, 5.0, 5.1, 5.0, 5.0, 5.1]);
        let train = Tensor::matrix(data, 8, 2).unwrap();
        let labels = vec![2, 2, 2, 2, 2, 0, 0, 0];
        let pred = knn_predict(&train, &labels, &[1.0, 1.0], 5, KnnMetric::Euclidean).unwrap();
        assert_eq!(pred, 2);
    }

    #[test]
    fn degenerate_identical_features_score_at_prior() {
        // Two interleaved classes with identical features: every vote ties,
        // the tie rules fall through to the lowest class index, so accuracy
        // equals the class-0 prior.
        let train = Tensor::matrix(vec![0.5; 40], 20, 2).unwrap();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let acc = knn_classify(&train, &labels, &train, &labels, 5, KnnMetric::Euclidean).unwrap();
        assert_eq!(acc, 0.5);
    }

    /// Independent oracle: exhaustive sort + explicit tie enumeration.
    fn oracle_predict(train: &[(Vec<f64>, usize)], query: &[f64], k: usize) -> usize {
        let mut d: Vec<(f64, usize)> = train
            .iter()
            .map(|(f, l)| {
                (
                    f.iter()
                        .zip(query)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt(),
                    *l,
                )
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let top = &d[..k];
        let classes: std::collections::BTreeSet<usize> = top.iter().map(|&(_, l)| l).collect();
        let mut candidates: Vec<(usize, f64, usize)> = classes
            .into_iter()
            .map(|c| {
                let votes = top.iter().filter(|&&(_, l)| l == c).count();
                let cum: f64 = top
                    .iter()
                    .filter(|&&(_, l)| l == c)
                    .map(|&(dist, _)| dist)
                    .sum();
                (votes, cum, c)
            })
            .collect();
        candidates.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        candidates[0].2
    }

    #[test]
    fn matches_independent_oracle_on_random_points() {
        let mut rng = crate::rng::rng_from(&[60]);
        let n = 100;
        let d = 3;
        let feats: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let train = Tensor::matrix(feats.clone(), n, d).unwrap();
        let pairs: Vec<(Vec<f64>, usize)> = (0..n)
            .map(|i| (feats[i * d..(i + 1) * d].to_vec(), labels[i]))
            .collect();
        for _ in 0..50 {
            let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ours = knn_predict(&train, &labels, &q, 5, KnnMetric::Euclidean).unwrap();
            let oracle = oracle_predict(&pairs, &q, 5);
            assert_eq!(ours, oracle);
        }
    }

    #[test]
    fn cosine_metric_ignores_scale() {
        let train = Tensor::matrix(vec![1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        let labels = vec![0, 1];
        let pred = knn_predict(&train, &labels, &[100.0, 1.0], 1, KnnMetric::Cosine).unwrap();
        assert_eq!(pred, 0);
    }

    #[test]
    fn k_larger_than_train_is_an_error() {
        let train = Tensor::matrix(vec![0.0, 0.0], 1, 2).unwrap();
        assert!(knn_predict(&train, &[0], &[0.0, 0.0], 5, KnnMetric::Euclidean).is_err());
    }
}
