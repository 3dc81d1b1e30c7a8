//! DBSCAN density clustering with Euclidean distance.
//!
//! O(m²) neighbor search; mini-batches here are at most a few hundred points.
//! Border points join the first discovered adjacent cluster (classic,
//! order-dependent behavior); core-point partitions are order-independent.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const NOISE: i32 = -1;

/// Per-point cluster labels; `-1` marks noise.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub labels: Vec<i32>,
    pub n_clusters: usize,
}

impl ClusterAssignment {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }
}

/// Mean and isotropic variance of one cluster.
#[derive(Debug, Clone)]
pub struct ClusterMoments {
    pub cluster: usize,
    pub mean: Vec<f64>,
    /// Average squared deviation per coordinate, floored at 1e-6.
    pub variance: f64,
    pub size: usize,
}

pub const VARIANCE_FLOOR: f64 = 1e-6;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Standard DBSCAN: core points have at least `min_pts` neighbors within
/// `eps` (self included); clusters are maximal density-connected sets.
/// Deterministic given fixed point order. An all-noise output is valid.
pub fn dbscan(points: &Tensor, eps: f64, min_pts: usize) -> Result<ClusterAssignment> {
    let shape = points.shape();
    if shape.len() != 2 || shape[0] == 0 {
        return Err(Error::InvalidShape {
            op: "dbscan",
            shape: shape.to_vec(),
            reason: "expected a non-empty m x k point set",
        });
    }
    if eps <= 0.0 || min_pts == 0 {
        return Err(Error::Domain {
            op: "dbscan",
            reason: "eps must be positive and min_pts at least 1".into(),
        });
    }
    let (m, k) = (shape[0], shape[1]);
    let data = points.data();
    let row = |i: usize| &data[i * k..(i + 1) * k];
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        (0..m)
            .filter(|&j| squared_distance(row(i), row(j)) <= eps2)
            .collect()
    };

    const UNVISITED: i32 = -2;
    let mut labels = vec![UNVISITED; m];
    let mut next_cluster: i32 = 0;

    for p in 0..m {
        if labels[p] != UNVISITED {
            continue;
        }
        let nbrs = neighbors(p);
        if nbrs.len() < min_pts {
            labels[p] = NOISE;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[p] = cluster;
        let mut queue: std::collections::VecDeque<usize> = nbrs.into();
        while let Some(q) = queue.pop_front() {
            if labels[q] == NOISE {
                labels[q] = cluster; // border point adopted by first cluster
            }
            if labels[q] != UNVISITED {
                continue;
            }
            labels[q] = cluster;
            let qn = neighbors(q);
            if qn.len() >= min_pts {
                queue.extend(qn);
            }
        }
    }

    Ok(ClusterAssignment {
        labels,
        n_clusters: next_cluster as usize,
    })
}

/// Per-cluster mean and isotropic variance; noise points are excluded.
pub fn cluster_moments(points: &Tensor, assignment: &ClusterAssignment) -> Result<Vec<ClusterMoments>> {
    let shape = points.shape();
    if shape.len() != 2 || shape[0] != assignment.labels.len() {
        return Err(Error::InvalidShape {
            op: "cluster_moments",
            shape: shape.to_vec(),
            reason: "assignment does not match the point set",
        });
    }
    let (m, k) = (shape[0], shape[1]);
    let data = points.data();
    let mut out = Vec::with_capacity(assignment.n_clusters);
    for c in 0..assignment.n_clusters {
        let members: Vec<usize> = (0..m)
            .filter(|&i| assignment.labels[i] == c as i32)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; k];
        for &i in &members {
            for j in 0..k {
                mean[j] += data[i * k + j];
            }
        }
        for v in &mut mean {
            *v /= members.len() as f64;
        }
        let mut ss = 0.0;
        for &i in &members {
            ss += squared_distance(&data[i * k..(i + 1) * k], &mean);
        }
        let variance = (ss / (members.len() * k) as f64).max(VARIANCE_FLOOR);
        out.push(ClusterMoments {
            cluster: c,
            mean,
            variance,
            size: members.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_distant_blobs() {
        // Blobs at 0 and 100 with spread 0.1: exactly 2 clusters, no noise.
        let mut data = Vec::new();
        for i in 0..5 {
            data.extend_from_slice(&[0.02 * i as f64, 0.0]);
        }
        for i in 0..5 {
            data.extend_from_slice(&[100.0 + 0.02 * i as f64, 0.0]);
        }
        let pts = Tensor::matrix(data, 10, 2).unwrap();
        let a = dbscan(&pts, 1.0, 3).unwrap();
        assert_eq!(a.n_clusters, 2);
        assert_eq!(a.noise_count(), 0);
        assert!(a.labels[..5].iter().all(|&l| l == a.labels[0]));
        assert!(a.labels[5..].iter().all(|&l| l == a.labels[5]));
        assert_ne!(a.labels[0], a.labels[5]);
    }

    #[test]
    fn isolated_point_is_noise() {
        let pts = Tensor::matrix(vec![0.0, 0.0], 1, 2).unwrap();
        let a = dbscan(&pts, 0.5, 2).unwrap();
        assert_eq!(a.labels, vec![NOISE]);
        assert_eq!(a.n_clusters, 0);
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let pts = Tensor::matrix(vec![1.0, 2.0].repeat(6), 6, 2).unwrap();
        let a = dbscan(&pts, 0.5, 6).unwrap();
        assert_eq!(a.n_clusters, 1);
        assert!(a.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn moments_hand_computed() {
        let pts = Tensor::matrix(vec![0.0, 0.0, 2.0, 0.0], 2, 2).unwrap();
        let a = ClusterAssignment {
            labels: vec![0, 0],
            n_clusters: 1,
        };
        let m = cluster_moments(&pts, &a).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].mean, vec![1.0, 0.0]);
        // ((1+0) + (1+0)) / (2 points * 2 coords)
        assert!((m[0].variance - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singleton_cluster_hits_variance_floor() {
        let pts = Tensor::matrix(vec![3.0, 4.0], 1, 2).unwrap();
        let a = ClusterAssignment {
            labels: vec![0],
            n_clusters: 1,
        };
        let m = cluster_moments(&pts, &a).unwrap();
        assert_eq!(m[0].variance, VARIANCE_FLOOR);
    }

    #[test]
    fn all_noise_gives_empty_moments() {
        let pts = Tensor::matrix(vec![0.0, 0.0, 10.0, 10.0], 2, 2).unwrap();
        let a = dbscan(&pts, 0.5, 2).unwrap();
        assert_eq!(a.n_clusters, 0);
        let m = cluster_moments(&pts, &a).unwrap();
        assert!(m.is_empty());
    }
}
