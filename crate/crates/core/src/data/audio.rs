//! Log-mel time-frequency patches and their augmentations.
//!
//! Patch values are natural-log magnitudes, `ln(mel + 1e-10)`; a grid is
//! `bands × frames`, row-major.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::MAX_RESAMPLES;
use crate::math;
use crate::numerics::Matrix;
use crate::rng::CounterRng;
use crate::{Error, Result};

/// Floor added before the logarithm.
pub const LOG_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TFPatch {
    pub grid: Matrix,
    pub source_id: u64,
}

impl TFPatch {
    pub fn new(grid: Matrix, source_id: u64) -> Self {
        TFPatch { grid, source_id }
    }

    pub fn bands(&self) -> usize {
        self.grid.rows()
    }

    pub fn frames(&self) -> usize {
        self.grid.cols()
    }

    fn with_grid(&self, grid: Matrix) -> Self {
        TFPatch {
            grid,
            source_id: self.source_id,
        }
    }

    /// Columns `[start, start + width)`, all bands.
    pub fn frames_slice(&self, start: usize, width: usize) -> TFPatch {
        let mut data = Vec::with_capacity(self.bands() * width);
        for b in 0..self.bands() {
            data.extend_from_slice(&self.grid.row(b)[start..start + width]);
        }
        self.with_grid(Matrix::from_raw(self.bands(), width, data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelConfig {
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    #[serde(default = "default_n_mels")]
    pub n_mels: usize,
    /// Samples per analysis frame (40 ms at the default rate).
    #[serde(default = "default_frame_len")]
    pub frame_len: usize,
    /// Samples between frame starts (50% overlap by default).
    #[serde(default = "default_hop")]
    pub hop: usize,
}

fn default_sample_rate() -> u32 {
    22_050
}
fn default_n_mels() -> usize {
    96
}
fn default_frame_len() -> usize {
    882
}
fn default_hop() -> usize {
    441
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate: default_sample_rate(),
            n_mels: default_n_mels(),
            frame_len: default_frame_len(),
            hop: default_hop(),
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("data.audio.sample_rate", self.sample_rate as usize),
            ("data.audio.n_mels", self.n_mels),
            ("data.audio.frame_len", self.frame_len),
            ("data.audio.hop", self.hop),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * math::log10(1.0 + hz / 700.0)
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (math::pow(10.0, mel / 2595.0) - 1.0)
}

/// Precomputed Hann window, DFT tables and HTK triangular filterbank.
#[derive(Debug, Clone)]
pub struct LogMel {
    cfg: MelConfig,
    window: Vec<f64>,
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
    /// `n_mels × bins`.
    filters: Matrix,
}

impl LogMel {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.frame_len;
        let bins = n / 2 + 1;
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * math::cos(TAU * i as f64 / n as f64))
            .collect();
        let mut cos_table = Vec::with_capacity(n);
        let mut sin_table = Vec::with_capacity(n);
        for i in 0..n {
            let a = TAU * i as f64 / n as f64;
            cos_table.push(math::cos(a));
            sin_table.push(math::sin(a));
        }
        let sr = cfg.sample_rate as f64;
        let top = hz_to_mel(sr / 2.0);
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let mut filters = Matrix::zeros(cfg.n_mels, bins);
        for m in 0..cfg.n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = k as f64 * sr / n as f64;
                let w = if f > lo && f <= center {
                    (f - lo) / (center - lo)
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                filters.set(m, k, w);
            }
        }
        Ok(LogMel {
            cfg: cfg.clone(),
            window,
            cos_table,
            sin_table,
            filters,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    pub fn filters(&self) -> &Matrix {
        &self.filters
    }

    /// Center frequency of mel band `m` in Hz.
    pub fn band_center(&self, m: usize) -> f64 {
        let top = hz_to_mel(self.cfg.sample_rate as f64 / 2.0);
        mel_to_hz(top * (m + 1) as f64 / (self.cfg.n_mels + 1) as f64)
    }

    /// `|DFT(window · frame)|` for bins `0..=frame_len/2`.
    pub fn magnitude_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let n = self.cfg.frame_len;
        debug_assert_eq!(frame.len(), n);
        let windowed: Vec<f64> = frame.iter().zip(&self.window).map(|(x, w)| x * w).collect();
        (0..n / 2 + 1)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                let mut idx = 0usize;
                for &x in &windowed {
                    re += x * self.cos_table[idx];
                    im -= x * self.sin_table[idx];
                    idx += k;
                    if idx >= n {
                        idx -= n;
                    }
                }
                math::sqrt(re * re + im * im)
            })
            .collect()
    }

    /// Frames are `1 + ⌊(len − frame_len) / hop⌋`, no padding.
    pub fn compute(&self, wav: &[f64], source_id: u64) -> Result<TFPatch> {
        let n = self.cfg.frame_len;
        if wav.len() < n {
            return Err(Error::TooShort {
                needed: n,
                available: wav.len(),
            });
        }
        let frames = 1 + (wav.len() - n) / self.cfg.hop;
        let mut grid = Matrix::zeros(self.cfg.n_mels, frames);
        for t in 0..frames {
            let start = t * self.cfg.hop;
            let spectrum = self.magnitude_spectrum(&wav[start..start + n]);
            for m in 0..self.cfg.n_mels {
                let energy: f64 = self
                    .filters
                    .row(m)
                    .iter()
                    .zip(&spectrum)
                    .map(|(w, s)| w * s)
                    .sum();
                grid.set(m, t, math::ln(energy + LOG_EPS));
            }
        }
        Ok(TFPatch::new(grid, source_id))
    }
}

/// One-shot log-mel spectrogram; build a [`LogMel`] to reuse the tables.
pub fn log_mel(wav: &[f64], cfg: &MelConfig) -> Result<TFPatch> {
    LogMel::new(cfg)?.compute(wav, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationConfig {
    /// Background weight is drawn from `U(0, mixback_lambda_max)`.
    #[serde(default = "default_lambda_max")]
    pub mixback_lambda_max: f64,
    /// Area fraction kept by the random resized crop.
    #[serde(default = "default_crop_scale")]
    pub crop_scale_range: [f64; 2],
    #[serde(default = "default_freq_mask")]
    pub freq_mask_max: usize,
    #[serde(default = "default_time_mask")]
    pub time_mask_max: usize,
    #[serde(default = "default_blur")]
    pub blur_sigma_range: [f64; 2],
    /// Mixed into every augmentation stream.
    #[serde(default)]
    pub seed: u64,
}

fn default_lambda_max() -> f64 {
    0.5
}
fn default_crop_scale() -> [f64; 2] {
    [0.6, 1.0]
}
fn default_freq_mask() -> usize {
    12
}
fn default_time_mask() -> usize {
    16
}
fn default_blur() -> [f64; 2] {
    [0.0, 1.0]
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            mixback_lambda_max: default_lambda_max(),
            crop_scale_range: default_crop_scale(),
            freq_mask_max: default_freq_mask(),
            time_mask_max: default_time_mask(),
            blur_sigma_range: default_blur(),
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mixback_lambda_max) {
            return Err(Error::config("augmentation.mixback_lambda_max", "must lie in [0, 1)"));
        }
        let [lo, hi] = self.crop_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::config("augmentation.crop_scale_range", "need 0 < lo <= hi <= 1"));
        }
        let [lo, hi] = self.blur_sigma_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config("augmentation.blur_sigma_range", "need 0 <= lo <= hi"));
        }
        Ok(())
    }
}

/// Two independent, uniformly placed crops of `target_frames` columns.
pub fn crop_pair(patch: &TFPatch, target_frames: usize, rng: &mut CounterRng) -> Result<(TFPatch, TFPatch)> {
    if target_frames == 0 || patch.frames() < target_frames {
        return Err(Error::TooShort {
            needed: target_frames.max(1),
            available: patch.frames(),
        });
    }
    let slack = patch.frames() - target_frames;
    let a = rng.inclusive(0, slack);
    let b = rng.inclusive(0, slack);
    Ok((patch.frames_slice(a, target_frames), patch.frames_slice(b, target_frames)))
}

fn check_same_shape(a: &TFPatch, b: &TFPatch) -> Result<()> {
    if a.grid.shape() != b.grid.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.grid.shape(),
            b.grid.shape()
        )));
    }
    Ok(())
}

/// Linear-magnitude mix `(1 − λ)·x + λ·background`, `λ ~ U(0, lambda_max)`.
pub fn mix_back(x: &TFPatch, background: &TFPatch, lambda_max: f64, rng: &mut CounterRng) -> Result<TFPatch> {
    if !(0.0..1.0).contains(&lambda_max) {
        return Err(Error::config("augmentation.mixback_lambda_max", "must lie in [0, 1)"));
    }
    let lambda = rng.uniform_range(0.0, lambda_max);
    mix_back_with(x, background, lambda)
}

/// [`mix_back`] with a fixed background weight.
pub fn mix_back_with(x: &TFPatch, background: &TFPatch, lambda: f64) -> Result<TFPatch> {
    check_same_shape(x, background)?;
    let (r, c) = x.grid.shape();
    let data = x
        .grid
        .as_slice()
        .iter()
        .zip(background.grid.as_slice())
        .map(|(&a, &b)| math::ln((1.0 - lambda) * math::exp(a) + lambda * math::exp(b)))
        .collect();
    Ok(x.with_grid(Matrix::from_raw(r, c, data)))
}

/// Zeroes one run of `U{0..=freq_mask_max}` bands and one run of
/// `U{0..=time_mask_max}` frames.
pub fn spec_masks(patch: &TFPatch, cfg: &AugmentationConfig, rng: &mut CounterRng) -> TFPatch {
    let (bands, frames) = patch.grid.shape();
    let mut grid = patch.grid.clone();
    let fw = rng.inclusive(0, cfg.freq_mask_max.min(bands));
    let f0 = rng.inclusive(0, bands - fw);
    for b in f0..f0 + fw {
        grid.row_mut(b).fill(0.0);
    }
    let tw = rng.inclusive(0, cfg.time_mask_max.min(frames));
    let t0 = rng.inclusive(0, frames - tw);
    for b in 0..bands {
        grid.row_mut(b)[t0..t0 + tw].fill(0.0);
    }
    patch.with_grid(grid)
}

/// Crops a random region covering an area fraction drawn from
/// `crop_scale_range` (aspect ratio kept) and resizes it back bilinearly.
pub fn random_resized_crop(patch: &TFPatch, cfg: &AugmentationConfig, rng: &mut CounterRng) -> TFPatch {
    let (h, w) = patch.grid.shape();
    let [lo, hi] = cfg.crop_scale_range;
    for _ in 0..MAX_RESAMPLES {
        let side = math::sqrt(rng.uniform_range(lo, hi));
        let ch = (math::round(h as f64 * side) as usize).min(h);
        let cw = (math::round(w as f64 * side) as usize).min(w);
        if ch == 0 || cw == 0 {
            continue;
        }
        let r0 = rng.inclusive(0, h - ch);
        let c0 = rng.inclusive(0, w - cw);
        return patch.with_grid(resize_bilinear(&patch.grid, r0, c0, ch, cw, h, w));
    }
    patch.clone()
}

/// Align-corners bilinear resize of the `ch × cw` window at `(r0, c0)`.
fn resize_bilinear(src: &Matrix, r0: usize, c0: usize, ch: usize, cw: usize, out_h: usize, out_w: usize) -> Matrix {
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out <= 1 || n_in <= 1 {
            return (0, 0, 0.0);
        }
        let pos = (i * (n_in - 1)) as f64 / (n_out - 1) as f64;
        let lo = (math::floor(pos) as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let (y0, y1, fy) = coord(i, out_h, ch);
        for j in 0..out_w {
            let (x0, x1, fx) = coord(j, out_w, cw);
            let at = |y: usize, x: usize| src.get(r0 + y, c0 + x);
            let top = if fx == 0.0 { at(y0, x0) } else { at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx };
            let v = if fy == 0.0 {
                top
            } else {
                let bottom = if fx == 0.0 { at(y1, x0) } else { at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx };
                top * (1.0 - fy) + bottom * fy
            };
            out.push(v);
        }
    }
    Matrix::from_raw(out_h, out_w, out)
}

fn gaussian_kernel_1d(sigma: f64) -> Vec<f64> {
    if !(sigma > 0.0) {
        return vec![1.0];
    }
    let radius = math::ceil(3.0 * sigma) as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|j| math::exp(-((j * j) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Normalized `(2r + 1) × (2r + 1)` kernel truncated at `r = ⌈3σ⌉`.
pub fn gaussian_kernel_2d(sigma: f64) -> Matrix {
    let k = gaussian_kernel_1d(sigma);
    let n = k.len();
    let mut data = Vec::with_capacity(n * n);
    for a in &k {
        data.extend(k.iter().map(|b| a * b));
    }
    Matrix::from_raw(n, n, data)
}

/// Half-sample symmetric reflection of `i` into `[0, n)`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable blur with [`gaussian_kernel_2d`] and reflect padding.
pub fn blur_with_sigma(patch: &TFPatch, sigma: f64) -> TFPatch {
    let k = gaussian_kernel_1d(sigma);
    if k.len() == 1 {
        return patch.clone();
    }
    let r = (k.len() / 2) as isize;
    let (h, w) = patch.grid.shape();
    let mut rows = Matrix::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let v = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * patch.grid.get(y, reflect(x as isize + t as isize - r, w)))
                .sum();
            rows.set(y, x, v);
        }
    }
    let mut out = Matrix::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let v = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * rows.get(reflect(y as isize + t as isize - r, h), x))
                .sum();
            out.set(y, x, v);
        }
    }
    patch.with_grid(out)
}

/// Blur with `σ ~ U(blur_sigma_range)`.
pub fn gaussian_blur(patch: &TFPatch, cfg: &AugmentationConfig, rng: &mut CounterRng) -> TFPatch {
    let [lo, hi] = cfg.blur_sigma_range;
    blur_with_sigma(patch, rng.uniform_range(lo, hi))
}

/// Mix-back, then resized crop, spectrogram masks and blur.
pub fn augment_patch(
    patch: &TFPatch,
    background: &TFPatch,
    cfg: &AugmentationConfig,
    rng: &mut CounterRng,
) -> Result<TFPatch> {
    let mixed = mix_back(patch, background, cfg.mixback_lambda_max, rng)?;
    let cropped = random_resized_crop(&mixed, cfg, rng);
    let masked = spec_masks(&cropped, cfg, rng);
    Ok(gaussian_blur(&masked, cfg, rng))
}

/// Encoder input for a patch: the grid flattened row-major and scaled by
/// 0.1 so typical log magnitudes land in a unit-ish range.
pub fn patch_features(patch: &TFPatch) -> Vec<f64> {
    patch.grid.as_slice().iter().map(|v| 0.1 * v).collect()
}
