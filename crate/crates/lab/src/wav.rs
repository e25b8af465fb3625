//! WAV input and the directory-per-class audio layout.

use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub sample_rate: u32,
    /// Mono samples in `[-1, 1]`; multi-channel files are averaged.
    pub samples: Vec<f64>,
}

pub fn read_wav(path: &Path) -> LabResult<Clip> {
    let bad = |e: hound::Error| LabError::data(format!("{}: {e}", path.display()));
    let mut reader = WavReader::open(path).map_err(bad)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(LabError::data(format!("{}: no channels", path.display())));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(bad)?
        }
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(bad)?,
    };
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(Clip { sample_rate: spec.sample_rate, samples })
}

/// Writes 16-bit PCM; `samples` are interleaved when `channels > 1`.
pub fn write_pcm16(path: &Path, sample_rate: u32, channels: u16, samples: &[f64]) -> LabResult<()> {
    let spec = WavSpec { channels, sample_rate, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let io = |e: hound::Error| LabError::output(path, std::io::Error::other(e));
    let mut w = WavWriter::create(path, spec).map_err(io)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(io)?;
    }
    w.finalize().map_err(io)
}

fn sorted_entries(dir: &Path) -> LabResult<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| LabError::read(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| LabError::read(dir, e))?;
    out.sort();
    Ok(out)
}

/// Class names (subdirectory names, sorted) and their `.wav` files. A
/// class's label is its index in the returned list.
pub fn class_dirs(root: &Path) -> LabResult<Vec<(String, Vec<PathBuf>)>> {
    let mut classes = Vec::new();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let files: Vec<PathBuf> = sorted_entries(&dir)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
            .collect();
        if !files.is_empty() {
            let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            classes.push((name, files));
        }
    }
    if classes.is_empty() {
        return Err(LabError::data(format!("{}: no class subdirectories with .wav files", root.display())));
    }
    Ok(classes)
}
