//! Turning configs and directories into corpora.

use std::path::{Path, PathBuf};

use acl_core::data::audio::{AugmentationConfig, LogMel, MelConfig, TFPatch};
use acl_core::data::synthetic::LabeledVectors;
use acl_core::training::{Corpus, DataSource, ExperimentConfig, Split};

use crate::error::{from_core, LabError, LabResult};
use crate::{tables, wav};

pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";
const DEFAULT_TEST_EVERY: usize = 5;

/// Log-mel patches of every clip under `root`, labeled by class directory.
pub fn load_clips(root: &Path, mel: &MelConfig) -> LabResult<(Vec<String>, Vec<(TFPatch, usize)>)> {
    let lm = LogMel::new(mel).map_err(|e| from_core("data.audio.mel", e))?;
    let classes = wav::class_dirs(root)?;
    let mut clips = Vec::new();
    for (label, (_, files)) in classes.iter().enumerate() {
        for path in files {
            let clip = wav::read_wav(path)?;
            if clip.sample_rate != mel.sample_rate {
                return Err(LabError::data(format!(
                    "{}: sample rate {} Hz, expected {} Hz",
                    path.display(),
                    clip.sample_rate,
                    mel.sample_rate
                )));
            }
            let patch = lm
                .compute(&clip.samples, clips.len() as u64)
                .map_err(|e| from_core(&path.display().to_string(), e))?;
            clips.push((patch, label));
        }
    }
    Ok((classes.into_iter().map(|c| c.0).collect(), clips))
}

/// `root` resolved against the directory holding the config file.
pub fn resolve(base: &Path, root: &str) -> PathBuf {
    let p = Path::new(root);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// The corpus a config describes. Relative audio roots are taken from
/// `base`.
pub fn corpus(cfg: &ExperimentConfig, base: &Path) -> LabResult<Corpus> {
    match cfg.data.source {
        DataSource::Synthetic => Corpus::synthetic(&cfg.data.synthetic).map_err(|e| from_core("data.synthetic", e)),
        DataSource::Audio => {
            let audio = cfg
                .data
                .audio
                .as_ref()
                .ok_or_else(|| LabError::config("data.audio", "required when data.source = \"audio\""))?;
            let root = resolve(base, &audio.root);
            let (_, clips) = load_clips(&root, &audio.mel)?;
            Corpus::from_clips(clips, audio.target_frames, audio.test_every, audio.augmentation.clone())
                .map_err(|e| from_core(&root.display().to_string(), e))
        }
    }
}

fn split(corpus: &Corpus, s: Split) -> LabResult<LabeledVectors> {
    LabeledVectors::new(corpus.features(s), corpus.labels(s).to_vec()).map_err(|e| from_core("dataset", e))
}

pub fn write_splits(corpus: &Corpus, dir: &Path) -> LabResult<()> {
    tables::write_vectors(&dir.join(TRAIN_CSV), &split(corpus, Split::Train)?)?;
    tables::write_vectors(&dir.join(TEST_CSV), &split(corpus, Split::Test)?)
}

/// Train and test splits of a dataset directory: either `train.csv` and
/// `test.csv`, or class subdirectories of WAV files at the default mel
/// settings, cropped to `d_in / n_mels` frames.
pub fn read_splits(dir: &Path, d_in: usize) -> LabResult<(LabeledVectors, LabeledVectors)> {
    if dir.join(TRAIN_CSV).is_file() {
        return Ok((tables::read_vectors(&dir.join(TRAIN_CSV))?, tables::read_vectors(&dir.join(TEST_CSV))?));
    }
    if !dir.is_dir() {
        return Err(LabError::data(format!("{}: no such dataset directory", dir.display())));
    }
    let mel = MelConfig::default();
    if d_in % mel.n_mels != 0 {
        return Err(LabError::data(format!(
            "model input width {d_in} is not a whole number of {}-band frames",
            mel.n_mels
        )));
    }
    let (_, clips) = load_clips(dir, &mel)?;
    let corpus = Corpus::from_clips(clips, d_in / mel.n_mels, DEFAULT_TEST_EVERY, AugmentationConfig::default())
        .map_err(|e| from_core(&dir.display().to_string(), e))?;
    Ok((split(&corpus, Split::Train)?, split(&corpus, Split::Test)?))
}
