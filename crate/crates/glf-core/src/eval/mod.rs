//! Representation-quality evaluation: linear probe, 5-NN, mean-classifier
//! cross-entropy, conditional variance, alignment/uniformity, separability.

mod knn;
mod metrics;
mod probe;

pub use knn::{knn_classify, knn_predict, KnnMetric};
pub use metrics::{
    alignment_uniformity, conditional_variance, intra_compactness, mean_classifier_ce,
    separability, MetricsReport,
};
pub use probe::{linear_probe, ProbeConfig};
