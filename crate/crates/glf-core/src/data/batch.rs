//! Seeded epoch batching with per-row augmentation streams.

use rand::seq::SliceRandom;

use super::augment::{augment_pair, AugmentationSpec};
use super::synth::Dataset;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Anchor contexts need at least 3 rows, so smaller tail batches are dropped.
pub const MIN_BATCH: usize = 3;

/// One mini-batch: ancestors plus two augmented views per row. Labels ride
/// along for evaluation only; training code consumes [`Batch::views`].
#[derive(Debug, Clone)]
pub struct Batch {
    pub ancestors: Tensor,
    pub view1: Tensor,
    pub view2: Tensor,
    pub labels: Option<Vec<usize>>,
}

impl Batch {
    /// The only accessor the training path uses: labels stay behind.
    pub fn views(&self) -> (&Tensor, &Tensor) {
        (&self.view1, &self.view2)
    }

    pub fn len(&self) -> usize {
        self.ancestors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Materializes the batches of one epoch. The augmentation stream for each
/// row is keyed by (epoch_seed, batch index, row index), so the composition
/// is a pure function of the seeds regardless of consumption order.
pub fn batch_iterator(
    dataset: &Dataset,
    batch_size: usize,
    epoch_seed: u64,
    augment: &AugmentationSpec,
) -> Result<Vec<Batch>> {
    if dataset.len() < MIN_BATCH {
        return Err(Error::Degenerate(format!(
            "dataset of {} rows cannot form a batch of at least {MIN_BATCH}",
            dataset.len()
        )));
    }
    if batch_size < MIN_BATCH {
        return Err(Error::InvalidSpec(format!(
            "batch_size must be at least {MIN_BATCH}"
        )));
    }
    augment.validate()?;

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffle_rng = rng_from(&[epoch_seed, 0x5503]);
    order.shuffle(&mut shuffle_rng);

    let d = dataset.dim();
    let mut out = Vec::new();
    for (batch_idx, chunk) in order.chunks(batch_size).enumerate() {
        if chunk.len() < MIN_BATCH {
            break;
        }
        let m = chunk.len();
        let mut ancestors = Vec::with_capacity(m * d);
        let mut v1 = Vec::with_capacity(m * d);
        let mut v2 = Vec::with_capacity(m * d);
        let mut labels = dataset.labels.as_ref().map(|_| Vec::with_capacity(m));
        for (row_idx, &sample) in chunk.iter().enumerate() {
            let x = dataset.feature_row(sample);
            ancestors.extend_from_slice(x);
            let mut rng = rng_from(&[epoch_seed, batch_idx as u64, row_idx as u64, 0xa46]);
            let (a, b) = augment_pair(x, augment, &mut rng);
            v1.extend(a);
            v2.extend(b);
            if let (Some(ls), Some(all)) = (labels.as_mut(), dataset.labels.as_ref()) {
                ls.push(all[sample]);
            }
        }
        out.push(Batch {
            ancestors: Tensor::matrix(ancestors, m, d)?,
            view1: Tensor::matrix(v1, m, d)?,
            view2: Tensor::matrix(v2, m, d)?,
            labels,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate, SyntheticKind, SyntheticSpec};

    fn tiny_dataset(n_per_class: usize) -> Dataset {
        generate(&SyntheticSpec {
            kind: SyntheticKind::Blobs,
            n_classes: 2,
            dim: 4,
            samples_per_class: n_per_class,
            class_separation: 5.0,
            spread: 0.2,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn partial_batches_below_three_are_dropped() {
        let ds = tiny_dataset(5); // 10 samples
        let batches = batch_iterator(&ds, 4, 0, &AugmentationSpec::identity()).unwrap();
        assert_eq!(batches.len(), 2);
        assert!(batches.iter().all(|b| b.len() == 4));
        // 11 samples with batch 4 keeps the final 3-row batch.
        let ds = generate(&SyntheticSpec {
            kind: SyntheticKind::Blobs,
            n_classes: 2,
            dim: 4,
            samples_per_class: 11,
            class_separation: 5.0,
            spread: 0.2,
            seed: 3,
        })
        .unwrap();
        let batches = batch_iterator(&ds, 4, 0, &AugmentationSpec::identity()).unwrap();
        assert_eq!(batches.len(), 5); // 22 samples -> 4,4,4,4,4 then 2 dropped
    }

    #[test]
    fn same_epoch_seed_reproduces_everything() {
        let ds = tiny_dataset(6);
        let spec = AugmentationSpec {
            noise_sigma: 0.1,
            dropout_p: 0.2,
            scale_min: 0.9,
            scale_max: 1.1,
        };
        let a = batch_iterator(&ds, 4, 7, &spec).unwrap();
        let b = batch_iterator(&ds, 4, 7, &spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.ancestors.data(), y.ancestors.data());
            assert_eq!(x.view1.data(), y.view1.data());
            assert_eq!(x.view2.data(), y.view2.data());
            assert_eq!(x.labels, y.labels);
        }
    }

    #[test]
    fn epoch_seeds_shuffle_differently() {
        let ds = tiny_dataset(20);
        let base = batch_iterator(&ds, 8, 0, &AugmentationSpec::identity()).unwrap();
        let mut any_different = false;
        for seed in 1..=5u64 {
            let other = batch_iterator(&ds, 8, seed, &AugmentationSpec::identity()).unwrap();
            if other[0].ancestors.data() != base[0].ancestors.data() {
                any_different = true;
            }
        }
        assert!(any_different);
    }

    #[test]
    fn tiny_datasets_are_rejected() {
        let ds = Dataset {
            features: Tensor::matrix(vec![0.0, 1.0, 2.0, 3.0], 2, 2).unwrap(),
            labels: None,
            n_classes: 0,
        };
        assert!(batch_iterator(&ds, 4, 0, &AugmentationSpec::identity()).is_err());
    }
}
