//! Gaussian clusters around random unit-sphere centroids.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MAX_RESAMPLES;
use crate::numerics::{self, Matrix, Vector};
use crate::rng::CounterRng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDatasetSpec {
    pub n_classes: usize,
    pub n_per_class: usize,
    /// Held-out samples per class, drawn from the same clusters.
    #[serde(default = "default_test_per_class")]
    pub n_test_per_class: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation around each centroid.
    pub cluster_spread: f64,
    /// Per-coordinate standard deviation of augmentation noise.
    pub noise_aug: f64,
    /// Range of the random positive rescaling applied by augmentation.
    #[serde(default = "default_scale_range")]
    pub scale_range: [f64; 2],
    pub mask_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_test_per_class() -> usize {
    50
}

fn default_scale_range() -> [f64; 2] {
    [0.8, 1.2]
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        SyntheticDatasetSpec {
            n_classes: 4,
            n_per_class: 200,
            n_test_per_class: default_test_per_class(),
            dim: 16,
            cluster_spread: 0.05,
            noise_aug: 0.05,
            scale_range: default_scale_range(),
            mask_prob: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("data.synthetic.n_classes", self.n_classes),
            ("data.synthetic.n_per_class", self.n_per_class),
            ("data.synthetic.n_test_per_class", self.n_test_per_class),
            ("data.synthetic.dim", self.dim),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        for (field, v) in [
            ("data.synthetic.cluster_spread", self.cluster_spread),
            ("data.synthetic.noise_aug", self.noise_aug),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be finite and >= 0"));
            }
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config("data.synthetic.scale_range", "need 0 < lo <= hi"));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) {
            return Err(Error::config("data.synthetic.mask_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn augmentation(&self) -> VectorAugment {
        VectorAugment {
            noise_sigma: self.noise_aug,
            scale_range: self.scale_range,
            mask_prob: self.mask_prob,
        }
    }
}

/// Row vectors with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVectors {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledVectors {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.rows(),
                right: labels.len(),
            });
        }
        Ok(LabeledVectors { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub centroids: Matrix,
    pub train: LabeledVectors,
    pub test: LabeledVectors,
}

const CENTROID_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

/// Class-major samples `centroid + N(0, σ_c²)` for train and test splits.
pub fn generate_synthetic(spec: &SyntheticDatasetSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let root = CounterRng::new(spec.seed);
    let mut centroids = Vec::with_capacity(spec.n_classes);
    for c in 0..spec.n_classes {
        let mut rng = root.substream(CENTROID_STREAM).substream(c as u64);
        // Resampling a zero draw is practically unreachable but keeps the
        // direction well defined.
        let dir = loop {
            let raw: Vec<f64> = (0..spec.dim).map(|_| rng.normal()).collect();
            if let Ok(unit) = numerics::l2_normalize(&raw) {
                break unit;
            }
        };
        centroids.push(dir.into_inner());
    }
    let centroids = Matrix::from_rows(&centroids)?;
    let split = |stream: u64, per_class: usize| -> Result<LabeledVectors> {
        let mut data = Vec::with_capacity(spec.n_classes * per_class * spec.dim);
        let mut labels = Vec::with_capacity(spec.n_classes * per_class);
        for c in 0..spec.n_classes {
            let center = centroids.row(c);
            for i in 0..per_class {
                let mut rng = root.substream(stream).substream(c as u64).substream(i as u64);
                data.extend(center.iter().map(|m| m + spec.cluster_spread * rng.normal()));
                labels.push(c);
            }
        }
        LabeledVectors::new(Matrix::new(labels.len(), spec.dim, data)?, labels)
    };
    Ok(SyntheticDataset {
        train: split(TRAIN_STREAM, spec.n_per_class)?,
        test: split(TEST_STREAM, spec.n_test_per_class)?,
        centroids,
    })
}

/// Vector-domain view augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorAugment {
    pub noise_sigma: f64,
    pub scale_range: [f64; 2],
    pub mask_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub vector: Vector,
    /// Draws taken, including the accepted one.
    pub attempts: usize,
    /// Every draw was degenerate and the input was passed through.
    pub fell_back: bool,
}

/// `y_k = 0` with probability `mask_prob`, else `s · x_k + σ · n_k` with a
/// shared scale `s ~ U(scale_range)`. All-zero draws are retried.
pub fn augment_vector(x: &[f64], aug: &VectorAugment, rng: &mut CounterRng) -> Result<Augmented> {
    let [lo, hi] = aug.scale_range;
    for attempt in 1..=MAX_RESAMPLES {
        let scale = rng.uniform_range(lo, hi);
        let out: Vec<f64> = x
            .iter()
            .map(|&v| {
                let masked = rng.bernoulli(aug.mask_prob);
                let noise = rng.normal();
                if masked {
                    0.0
                } else {
                    scale * v + aug.noise_sigma * noise
                }
            })
            .collect();
        if numerics::norm(&out) >= numerics::ZERO_NORM {
            return Ok(Augmented {
                vector: Vector::new(out)?,
                attempts: attempt,
                fell_back: false,
            });
        }
    }
    Ok(Augmented {
        vector: Vector::new(x.to_vec())?,
        attempts: MAX_RESAMPLES,
        fell_back: true,
    })
}
