//! Synthetic datasets, augmentation, batching, and numeric file ingestion.

mod augment;
mod batch;
mod fileio;
mod synth;

pub use augment::{augment_pair, AugmentationSpec};
pub use batch::{batch_iterator, Batch, MIN_BATCH};
pub use fileio::{
    load_matrix_glf1, load_numeric_file, save_raw_f64, FileFormat, GLF1_MAGIC,
};
pub use synth::{generate, Dataset, SyntheticKind, SyntheticSpec};
