//! Positive-pair data: a seeded synthetic clustered-vector generator and the
//! audio time-frequency path (log-mel patches, mix-back and augmentations).
//!
//! Every stochastic function takes the [`CounterRng`](crate::rng::CounterRng)
//! it draws from. Callers derive one substream per (item, view), so the
//! result for an item never depends on processing order.

pub mod audio;
pub mod synthetic;

pub use audio::{
    augment_patch, crop_pair, gaussian_blur, log_mel, mix_back, patch_features, random_resized_crop,
    spec_masks, AugmentationConfig, LogMel, MelConfig, TFPatch,
};
pub use synthetic::{
    augment_vector, generate_synthetic, Augmented, LabeledVectors, SyntheticDataset, SyntheticDatasetSpec,
    VectorAugment,
};

/// Attempts made before a degenerate augmentation falls back to the input.
pub const MAX_RESAMPLES: usize = 8;
