//! Samples, synthetic data and augmentation.

pub mod augment;
mod dataset;
pub mod synth;

pub use augment::Augment;
pub use dataset::{list_images, load_dir, pair_by_stem, write_samples, Sample};
pub use synth::{synth_dataset, SynthSample, SynthSpec};
