//! Training loops: self-supervised pretraining with the combined loss,
//! supervised training with cross-entropy plus margin, and sweeps.
//!
//! Every random draw comes from a substream of `CounterRng::new(seed)`:
//! initialization, the per-epoch shuffle, and one stream per
//! `(epoch, item, view)` for augmentation. A run is therefore a pure
//! function of its configuration and corpus.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Tensor;
use crate::data::{
    augment_patch, augment_vector, crop_pair, generate_synthetic, patch_features, AugmentationConfig,
    LabeledVectors, MelConfig, SyntheticDatasetSpec, TFPatch, VectorAugment,
};
use crate::encoder::{self, Activation, Dense, EncoderConfig, EncoderParams, Mode};
use crate::losses::{self, build_pair_relation, LossConfig, PairBatch, PairRelation};
use crate::metrics::{self, argmax_rows, LabeledEmbeddings, ToleranceNorm, MAX_EXACT_ROWS};
use crate::numerics::{pairwise_sum, Matrix};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::CounterRng;
use crate::{Error, Result};

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const AUGMENT_STREAM: u64 = 2;
const SUBSAMPLE_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Ssl,
    Supervised,
}

/// Which embedding the uniformity and tolerance columns describe. The
/// linear probe always reads `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSpace {
    /// Encoder output, where the margin term acts.
    H,
    /// Projection-head output, where the contrastive term acts.
    #[default]
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub tolerance_norm: ToleranceNorm,
    #[serde(default)]
    pub space: EmbeddingSpace,
    #[serde(default = "default_probe_every")]
    pub probe_every: usize,
    #[serde(default = "default_probe_epochs")]
    pub probe_epochs: usize,
    #[serde(default = "default_probe_lr")]
    pub probe_lr: f64,
}

fn default_t() -> f64 {
    2.0
}
fn default_probe_every() -> usize {
    10
}
fn default_probe_epochs() -> usize {
    300
}
fn default_probe_lr() -> f64 {
    1.0
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            t: default_t(),
            tolerance_norm: ToleranceNorm::default(),
            space: EmbeddingSpace::default(),
            probe_every: default_probe_every(),
            probe_epochs: default_probe_epochs(),
            probe_lr: default_probe_lr(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Audio,
}

/// A directory of WAV files, one subdirectory per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioCorpusConfig {
    pub root: String,
    #[serde(default)]
    pub mel: MelConfig,
    #[serde(default = "default_target_frames")]
    pub target_frames: usize,
    /// Within each class, every `test_every`-th clip is held out.
    #[serde(default = "default_test_every")]
    pub test_every: usize,
    #[serde(default)]
    pub augmentation: AugmentationConfig,
}

fn default_target_frames() -> usize {
    101
}
fn default_test_every() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub source: DataSource,
    #[serde(default)]
    pub synthetic: SyntheticDatasetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioCorpusConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_kind")]
    pub kind: OptimizerKind,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_kind() -> OptimizerKind {
    OptimizerKind::Adam
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch_size() -> usize {
    64
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: default_kind(),
            lr: default_lr(),
            batch_size: default_batch_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Measured time is not reproducible, so `wall_ms` is written as 0
    /// unless this is set.
    #[serde(default)]
    pub record_wall_ms: bool,
}

fn default_epochs() -> usize {
    100
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: default_epochs(),
            record_wall_ms: false,
        }
    }
}

/// Every knob of a run. Only `loss.alpha` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    pub loss: LossConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub training: TrainingConfig,
}

fn default_output_dir() -> String {
    "runs/default".to_string()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: RunMode::default(),
            seed: 0,
            output_dir: default_output_dir(),
            loss: LossConfig::default(),
            metrics: MetricsConfig::default(),
            data: DataConfig::default(),
            encoder: EncoderConfig::default(),
            optimizer: OptimizerConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.encoder.validate()?;
        Optimizer::new(self.optimizer.kind, self.optimizer.lr)?;
        if self.optimizer.batch_size == 0 {
            return Err(Error::config("optimizer.batch_size", "must be >= 1"));
        }
        if self.mode == RunMode::Supervised && self.optimizer.batch_size < 2 {
            return Err(Error::config("optimizer.batch_size", "supervised runs need >= 2"));
        }
        if !(self.metrics.t > 0.0 && self.metrics.t.is_finite()) {
            return Err(Error::config("metrics.t", format!("must be > 0, got {}", self.metrics.t)));
        }
        if self.metrics.probe_every == 0 {
            return Err(Error::config("metrics.probe_every", "must be >= 1"));
        }
        if !(self.metrics.probe_lr > 0.0 && self.metrics.probe_lr.is_finite()) {
            return Err(Error::config("metrics.probe_lr", "must be > 0"));
        }
        if self.output_dir.is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }
        match self.data.source {
            DataSource::Synthetic => self.data.synthetic.validate()?,
            DataSource::Audio => {
                let audio = self
                    .data
                    .audio
                    .as_ref()
                    .ok_or_else(|| Error::config("data.audio", "required when data.source = \"audio\""))?;
                audio.mel.validate()?;
                audio.augmentation.validate()?;
                if audio.target_frames == 0 {
                    return Err(Error::config("data.audio.target_frames", "must be >= 1"));
                }
                if audio.test_every < 2 {
                    return Err(Error::config("data.audio.test_every", "must be >= 2"));
                }
            }
        }
        Ok(())
    }
}

/// Synthetic vectors with their augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorCorpus {
    pub train: LabeledVectors,
    pub test: LabeledVectors,
    pub augment: VectorAugment,
}

/// Log-mel clips, each at least `target_frames` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchCorpus {
    pub train: Vec<TFPatch>,
    pub train_labels: Vec<usize>,
    pub test: Vec<TFPatch>,
    pub test_labels: Vec<usize>,
    pub target_frames: usize,
    pub augmentation: AugmentationConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Corpus {
    Vectors(VectorCorpus),
    Patches(PatchCorpus),
}

impl Corpus {
    pub fn synthetic(spec: &SyntheticDatasetSpec) -> Result<Self> {
        let data = generate_synthetic(spec)?;
        Ok(Corpus::Vectors(VectorCorpus {
            train: data.train,
            test: data.test,
            augment: spec.augmentation(),
        }))
    }

    /// Splits labeled clips per class: clip `k` of a class goes to the test
    /// split when `k % test_every == test_every − 1`.
    pub fn from_clips(
        clips: Vec<(TFPatch, usize)>,
        target_frames: usize,
        test_every: usize,
        augmentation: AugmentationConfig,
    ) -> Result<Self> {
        augmentation.validate()?;
        if test_every < 2 {
            return Err(Error::config("data.audio.test_every", "must be >= 2"));
        }
        let shape = clips.first().map(|(p, _)| p.bands()).ok_or(Error::EmptyInput)?;
        let mut seen: Vec<usize> = Vec::new();
        let mut corpus = PatchCorpus {
            train: Vec::new(),
            train_labels: Vec::new(),
            test: Vec::new(),
            test_labels: Vec::new(),
            target_frames,
            augmentation,
        };
        for (patch, label) in clips {
            if patch.bands() != shape {
                return Err(Error::ShapeMismatch(format!(
                    "clip {} has {} bands, expected {shape}",
                    patch.source_id,
                    patch.bands()
                )));
            }
            if patch.frames() < target_frames {
                return Err(Error::TooShort {
                    needed: target_frames,
                    available: patch.frames(),
                });
            }
            if seen.len() <= label {
                seen.resize(label + 1, 0);
            }
            let k = seen[label];
            seen[label] += 1;
            if k % test_every == test_every - 1 {
                corpus.test.push(patch);
                corpus.test_labels.push(label);
            } else {
                corpus.train.push(patch);
                corpus.train_labels.push(label);
            }
        }
        if corpus.train.is_empty() || corpus.test.is_empty() {
            return Err(Error::TooFewSamples(corpus.train.len() + corpus.test.len()));
        }
        Ok(Corpus::Patches(corpus))
    }

    pub fn len(&self, split: Split) -> usize {
        self.labels(split).len()
    }

    pub fn is_empty(&self, split: Split) -> bool {
        self.len(split) == 0
    }

    pub fn labels(&self, split: Split) -> &[usize] {
        match (self, split) {
            (Corpus::Vectors(c), Split::Train) => &c.train.labels,
            (Corpus::Vectors(c), Split::Test) => &c.test.labels,
            (Corpus::Patches(c), Split::Train) => &c.train_labels,
            (Corpus::Patches(c), Split::Test) => &c.test_labels,
        }
    }

    /// Encoder input width.
    pub fn d_in(&self) -> usize {
        match self {
            Corpus::Vectors(c) => c.train.dim(),
            Corpus::Patches(c) => c.train[0].bands() * c.target_frames,
        }
    }

    /// Unaugmented encoder inputs. Clips use their centered crop.
    pub fn features(&self, split: Split) -> Matrix {
        match (self, split) {
            (Corpus::Vectors(c), Split::Train) => c.train.features.clone(),
            (Corpus::Vectors(c), Split::Test) => c.test.features.clone(),
            (Corpus::Patches(c), split) => {
                let clips = if split == Split::Train { &c.train } else { &c.test };
                let mut data = Vec::with_capacity(clips.len() * self.d_in());
                for p in clips {
                    let start = (p.frames() - c.target_frames) / 2;
                    data.extend(patch_features(&p.frames_slice(start, c.target_frames)));
                }
                Matrix::from_raw(clips.len(), self.d_in(), data)
            }
        }
    }

    /// The positive pair for training item `item`.
    pub fn views(&self, item: usize, rng: &CounterRng) -> Result<[Vec<f64>; 2]> {
        match self {
            Corpus::Vectors(c) => {
                let x = c.train.features.row(item);
                let a = augment_vector(x, &c.augment, &mut rng.substream(0))?;
                let b = augment_vector(x, &c.augment, &mut rng.substream(1))?;
                Ok([a.vector.into_inner(), b.vector.into_inner()])
            }
            Corpus::Patches(c) => {
                let (a, b) = crop_pair(&c.train[item], c.target_frames, &mut rng.substream(2))?;
                let mut out = [Vec::new(), Vec::new()];
                for (v, view) in [a, b].iter().enumerate() {
                    let mut r = rng.substream(v as u64);
                    let bg_clip = &c.train[r.below(c.train.len() as u64) as usize];
                    let start = r.inclusive(0, bg_clip.frames() - c.target_frames);
                    let background = bg_clip.frames_slice(start, c.target_frames);
                    out[v] = patch_features(&augment_patch(view, &background, &c.augmentation, &mut r)?);
                }
                Ok(out)
            }
        }
    }

    fn augment_seed(&self) -> u64 {
        match self {
            Corpus::Vectors(_) => 0,
            Corpus::Patches(c) => c.augmentation.seed,
        }
    }
}

/// One line of `records.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub loss_total: f64,
    /// Contrastive term in SSL runs, cross-entropy in supervised runs.
    pub loss_contrastive: f64,
    pub loss_margin: f64,
    pub uniformity: f64,
    pub tolerance: f64,
    pub probe_acc: Option<f64>,
    pub wall_ms: u64,
}

/// Hooks a caller can attach to a run.
pub trait TrainObserver {
    /// Milliseconds since the run started; only read when
    /// `training.record_wall_ms` is set.
    fn elapsed_ms(&mut self) -> u64 {
        0
    }

    fn on_record(&mut self, _record: &TrainRecord) {}
}

/// An observer that does nothing.
pub struct Silent;

impl TrainObserver for Silent {}

/// Loss and gradients of one self-supervised batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLoss {
    pub total: f64,
    pub contrastive: f64,
    pub margin: f64,
    pub grad_z: Matrix,
    /// `None` when nothing is injected at `h`.
    pub grad_h: Option<Matrix>,
}

/// The combined loss used by [`train_ssl`].
pub fn acl_step(batch: &PairBatch, relation: &PairRelation, cfg: &LossConfig) -> Result<StepLoss> {
    let r = losses::acl(batch, relation, cfg)?;
    Ok(StepLoss {
        total: r.value,
        contrastive: r.contrastive,
        margin: r.margin,
        grad_z: r.grad_z,
        grad_h: Some(r.grad_h),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SslRun {
    pub params: EncoderParams,
    pub records: Vec<TrainRecord>,
}

pub fn train_ssl(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<SslRun> {
    train_ssl_observed(cfg, corpus, &mut Silent)
}

pub fn train_ssl_observed(cfg: &ExperimentConfig, corpus: &Corpus, obs: &mut dyn TrainObserver) -> Result<SslRun> {
    let loss = cfg.loss;
    train_ssl_with_loss(cfg, corpus, obs, &|b, r| acl_step(b, r, &loss))
}

/// [`train_ssl`] with the per-batch loss supplied by the caller.
///
/// Epoch 0 evaluates the initial parameters (losses over one pass without
/// updates); epochs `1..=epochs` train.
pub fn train_ssl_with_loss(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    obs: &mut dyn TrainObserver,
    loss: &dyn Fn(&PairBatch, &PairRelation) -> Result<StepLoss>,
) -> Result<SslRun> {
    cfg.validate()?;
    let root = CounterRng::new(cfg.seed);
    let mut params = EncoderParams::init(corpus.d_in(), &cfg.encoder, &root.substream(INIT_STREAM))?;
    let mut opt = Optimizer::new(cfg.optimizer.kind, cfg.optimizer.lr)?;
    let augment_root = root.substream(AUGMENT_STREAM).substream(corpus.augment_seed());
    let mut records = Vec::with_capacity(cfg.training.epochs + 1);

    for epoch in 0..=cfg.training.epochs {
        let mut order: Vec<usize> = (0..corpus.len(Split::Train)).collect();
        root.substream(SHUFFLE_STREAM).substream(epoch as u64).shuffle(&mut order);
        let epoch_rng = augment_root.substream(epoch as u64);
        let mut totals = Vec::new();
        let mut contrastive = Vec::new();
        let mut margins = Vec::new();

        for (b, chunk) in order.chunks(cfg.optimizer.batch_size).enumerate() {
            let numeric = || Error::NumericFailure { epoch, batch: b };
            let d_in = corpus.d_in();
            let mut x = Vec::with_capacity(2 * chunk.len() * d_in);
            for &item in chunk {
                let [v0, v1] = corpus.views(item, &epoch_rng.substream(item as u64))?;
                x.extend(v0);
                x.extend(v1);
            }
            let x = Matrix::new(2 * chunk.len(), d_in, x)?;
            let fwd = encoder::forward(&params, &x, Mode::Train)?;
            if !(fwd.h.is_finite() && fwd.z.is_finite()) {
                return Err(numeric());
            }
            let batch = match PairBatch::new(fwd.z, fwd.h) {
                Err(Error::ZeroVector) => return Err(numeric()),
                other => other?,
            };
            let step = loss(&batch, &build_pair_relation(chunk.len()))?;
            if !(step.total.is_finite() && step.grad_z.is_finite()) {
                return Err(numeric());
            }
            totals.push(step.total);
            contrastive.push(step.contrastive);
            margins.push(step.margin);
            if epoch == 0 {
                continue;
            }
            let grad_h = step
                .grad_h
                .unwrap_or_else(|| Matrix::zeros(batch.h().rows(), batch.h().cols()));
            let grads = encoder::backward(&params, &fwd.trace, &grad_h, Some(&step.grad_z))?;
            if grads.slices().iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(numeric());
            }
            opt.step(params.trainable_mut(), &grads.slices())?;
            params.update_running_stats(&fwd.trace);
        }

        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { pairwise_sum(v) / v.len() as f64 };
        let eval = evaluate_ssl(cfg, corpus, &params, epoch)?;
        let record = TrainRecord {
            epoch,
            loss_total: mean(&totals),
            loss_contrastive: mean(&contrastive),
            loss_margin: mean(&margins),
            uniformity: eval.uniformity,
            tolerance: eval.tolerance,
            probe_acc: eval.probe_acc,
            wall_ms: if cfg.training.record_wall_ms { obs.elapsed_ms() } else { 0 },
        };
        obs.on_record(&record);
        records.push(record);
    }
    Ok(SslRun { params, records })
}

fn probe_due(cfg: &ExperimentConfig, epoch: usize) -> bool {
    epoch % cfg.metrics.probe_every == 0 || epoch == cfg.training.epochs
}

struct Evaluation {
    uniformity: f64,
    tolerance: f64,
    probe_acc: Option<f64>,
}

/// Eval-mode `(h, z)` for a split.
pub fn embed(params: &EncoderParams, corpus: &Corpus, split: Split) -> Result<(Matrix, Matrix)> {
    let f = encoder::forward(params, &corpus.features(split), Mode::Eval)?;
    Ok((f.h, f.z))
}

fn geometry(cfg: &ExperimentConfig, emb: &LabeledEmbeddings, epoch: usize) -> Result<(f64, f64)> {
    let sub;
    let emb = if emb.len() > MAX_EXACT_ROWS {
        let seed = CounterRng::new(cfg.seed).substream(SUBSAMPLE_STREAM).at(epoch as u64);
        sub = metrics::reservoir_subsample(emb, MAX_EXACT_ROWS, seed);
        &sub
    } else {
        emb
    };
    Ok((
        metrics::uniformity(emb, cfg.metrics.t)?,
        metrics::tolerance(emb, cfg.metrics.tolerance_norm)?,
    ))
}

fn labeled(m: &Matrix, labels: &[usize], epoch: usize) -> Result<LabeledEmbeddings> {
    match LabeledEmbeddings::new(m, labels.to_vec()) {
        Err(Error::ZeroVector) => Err(Error::NumericFailure { epoch, batch: 0 }),
        other => other,
    }
}

fn evaluate_ssl(cfg: &ExperimentConfig, corpus: &Corpus, params: &EncoderParams, epoch: usize) -> Result<Evaluation> {
    let (test_h, test_z) = embed(params, corpus, Split::Test)?;
    let test_labels = corpus.labels(Split::Test);
    let space = match cfg.metrics.space {
        EmbeddingSpace::H => &test_h,
        EmbeddingSpace::Z => &test_z,
    };
    let (uniformity, tolerance) = geometry(cfg, &labeled(space, test_labels, epoch)?, epoch)?;
    let probe_acc = if probe_due(cfg, epoch) {
        let (train_h, _) = embed(params, corpus, Split::Train)?;
        let train = labeled(&train_h, corpus.labels(Split::Train), epoch)?;
        let test = labeled(&test_h, test_labels, epoch)?;
        Some(metrics::linear_probe(&train, &test, cfg.metrics.probe_epochs, cfg.metrics.probe_lr)?.accuracy)
    } else {
        None
    };
    Ok(Evaluation {
        uniformity,
        tolerance,
        probe_acc,
    })
}

/// Encoder followed by a linear classifier on `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedModel {
    pub encoder: EncoderParams,
    pub classifier: Dense,
}

impl SupervisedModel {
    pub fn init(d_in: usize, classes: usize, cfg: &EncoderConfig, rng: &CounterRng) -> Result<Self> {
        let encoder = EncoderParams::init(d_in, cfg, &rng.substream(0))?;
        let classifier = Dense::init(cfg.d_h, classes, Activation::Identity, &mut rng.substream(1));
        Ok(SupervisedModel { encoder, classifier })
    }

    pub fn logits(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let (h, _) = encoder::forward_h(&self.encoder, x)?;
        Ok((self.classifier.linear(&h), h))
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(x)?.0))
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        let mut out = self.encoder.to_tensors();
        out.push(Tensor::matrix("classifier.weight".to_string(), &self.classifier.weight));
        out.push(Tensor::vector("classifier.bias".to_string(), &self.classifier.bias));
        out
    }

    /// `Ok(None)` when the tensors hold an encoder without a classifier.
    pub fn from_tensors(tensors: &[Tensor]) -> Result<Option<Self>> {
        let encoder = EncoderParams::from_tensors(tensors)?;
        let find = |name: &str| tensors.iter().find(|t| t.name == name);
        let (Some(w), Some(b)) = (find("classifier.weight"), find("classifier.bias")) else {
            return Ok(None);
        };
        let classifier = Dense {
            weight: w.as_matrix()?,
            bias: b.as_vector()?,
            activation: Activation::Identity,
        };
        if classifier.fan_in() != encoder.d_h() || classifier.bias.len() != classifier.fan_out() {
            return Err(Error::Checkpoint("classifier does not fit the encoder".into()));
        }
        Ok(Some(SupervisedModel { encoder, classifier }))
    }

    fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.encoder.layers {
            out.push(l.weight.as_mut_slice());
            out.push(&mut l.bias);
        }
        out.push(self.classifier.weight.as_mut_slice());
        out.push(&mut self.classifier.bias);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedRun {
    pub model: SupervisedModel,
    pub records: Vec<TrainRecord>,
}

pub fn train_supervised(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<SupervisedRun> {
    train_supervised_observed(cfg, corpus, &mut Silent)
}

/// Trains on unaugmented training samples. `loss_contrastive` holds the
/// cross-entropy and `probe_acc` the classifier's own test accuracy.
pub fn train_supervised_observed(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    obs: &mut dyn TrainObserver,
) -> Result<SupervisedRun> {
    cfg.validate()?;
    let root = CounterRng::new(cfg.seed);
    let train_x = corpus.features(Split::Train);
    let train_y = corpus.labels(Split::Train);
    let classes = train_y.iter().max().map_or(0, |&m| m + 1);
    let mut model = SupervisedModel::init(corpus.d_in(), classes, &cfg.encoder, &root.substream(INIT_STREAM))?;
    let mut opt = Optimizer::new(cfg.optimizer.kind, cfg.optimizer.lr)?;
    let mut records = Vec::with_capacity(cfg.training.epochs + 1);

    for epoch in 0..=cfg.training.epochs {
        let mut order: Vec<usize> = (0..train_y.len()).collect();
        root.substream(SHUFFLE_STREAM).substream(epoch as u64).shuffle(&mut order);
        let mut totals = Vec::new();
        let mut ces = Vec::new();
        let mut margins = Vec::new();

        // A trailing single sample has no pairs for the margin term.
        for (b, chunk) in order.chunks(cfg.optimizer.batch_size).filter(|c| c.len() >= 2).enumerate() {
            let numeric = || Error::NumericFailure { epoch, batch: b };
            let x = train_x.select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            let (h, trace) = encoder::forward_h(&model.encoder, &x)?;
            if !h.is_finite() {
                return Err(numeric());
            }
            let pre = model.classifier.linear(&h);
            let r = match losses::supervised_combined(&pre, &h, &labels, &cfg.loss) {
                Err(Error::ZeroVector) => return Err(numeric()),
                other => other?,
            };
            if !r.value.is_finite() {
                return Err(numeric());
            }
            totals.push(r.value);
            ces.push(r.cross_entropy);
            margins.push(r.margin);
            if epoch == 0 {
                continue;
            }
            let (gw, gb, gh) = model.classifier.backward(&h, &pre, &r.grad_logits);
            let mut grad_h = r.grad_h;
            for (a, g) in grad_h.as_mut_slice().iter_mut().zip(gh.as_slice()) {
                *a += g;
            }
            let grads = encoder::backward(&model.encoder, &trace, &grad_h, None)?;
            let mut slices: Vec<&[f64]> = Vec::new();
            for (w, b) in &grads.layers {
                slices.push(w.as_slice());
                slices.push(b);
            }
            slices.push(gw.as_slice());
            slices.push(&gb);
            if slices.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(numeric());
            }
            opt.step(model.trainable_mut(), &slices)?;
        }

        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { pairwise_sum(v) / v.len() as f64 };
        let test_x = corpus.features(Split::Test);
        let test_y = corpus.labels(Split::Test);
        let (logits, h) = model.logits(&test_x)?;
        // There is no projection head here, so `metrics.space` has no effect.
        let (uniformity, tolerance) = geometry(cfg, &labeled(&h, test_y, epoch)?, epoch)?;
        let probe_acc = probe_due(cfg, epoch).then(|| {
            let pred = argmax_rows(&logits);
            pred.iter().zip(test_y).filter(|(p, t)| p == t).count() as f64 / test_y.len() as f64
        });
        let record = TrainRecord {
            epoch,
            loss_total: mean(&totals),
            loss_contrastive: mean(&ces),
            loss_margin: mean(&margins),
            uniformity,
            tolerance,
            probe_acc,
            wall_ms: if cfg.training.record_wall_ms { obs.elapsed_ms() } else { 0 },
        };
        obs.on_record(&record);
        records.push(record);
    }
    Ok(SupervisedRun { model, records })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Tau,
    Alpha,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau",
            SweepAxis::Alpha => "alpha",
        }
    }
}

/// The configured loss, or the contrastive-only baseline (`α = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariant {
    Acl,
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub variant: SweepVariant,
    pub config: ExperimentConfig,
}

/// Final-epoch metrics of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub variant: SweepVariant,
    pub uniformity: f64,
    pub tolerance: f64,
    pub probe_acc: f64,
}

/// One configuration per `(value, variant)`, all sharing `cfg.seed`.
/// Nothing else changes between points.
pub fn sweep_points(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(Error::config("sweep.values", "at least one value is required"));
    }
    let mut points = Vec::with_capacity(2 * values.len());
    for &value in values {
        for variant in [SweepVariant::Acl, SweepVariant::Baseline] {
            let mut config = cfg.clone();
            config.mode = RunMode::Ssl;
            match axis {
                SweepAxis::Tau => config.loss.tau = value,
                SweepAxis::Alpha => config.loss.alpha = value,
            }
            if variant == SweepVariant::Baseline {
                config.loss.alpha = 1.0;
            }
            config.loss.validate()?;
            points.push(SweepPoint { value, variant, config });
        }
    }
    Ok(points)
}

pub fn run_sweep_point(point: &SweepPoint, corpus: &Corpus) -> Result<SweepRow> {
    let run = train_ssl(&point.config, corpus)?;
    let last = run.records.last().ok_or(Error::EmptyInput)?;
    Ok(SweepRow {
        value: point.value,
        variant: point.variant,
        uniformity: last.uniformity,
        tolerance: last.tolerance,
        probe_acc: last.probe_acc.unwrap_or(f64::NAN),
    })
}

/// Runs every point of [`sweep_points`] in order.
pub fn sweep(cfg: &ExperimentConfig, corpus: &Corpus, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    sweep_points(cfg, axis, values)?
        .iter()
        .map(|p| run_sweep_point(p, corpus))
        .collect()
}
