//! Embedding-quality diagnostics: uniformity, tolerance, linear probe and
//! class-wise accuracy.
//!
//! Uniformity and tolerance are expectations over pairs of embeddings. They
//! are computed exactly over all unordered distinct pairs; sets larger than
//! [`MAX_EXACT_ROWS`] can be reduced first with [`reservoir_subsample`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::losses::cross_entropy;
use crate::math;
use crate::numerics::{self, dot, log_sum_exp, normalize_rows, pairwise_sum, Matrix};
use crate::rng::CounterRng;
use crate::{Error, Result};

/// Above this many rows the exact pair enumeration gets expensive.
pub const MAX_EXACT_ROWS: usize = 2048;

/// Unit-norm embeddings with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    z: Matrix,
    labels: Vec<usize>,
}

impl LabeledEmbeddings {
    /// Normalizes every row of `z`.
    pub fn new(z: &Matrix, labels: Vec<usize>) -> Result<Self> {
        if z.rows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: z.rows(),
                right: labels.len(),
            });
        }
        let (unit, _) = normalize_rows(z)?;
        Ok(LabeledEmbeddings { z: unit, labels })
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z.cols()
    }

    /// One past the largest label.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        LabeledEmbeddings {
            z: self.z.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Denominator of the tolerance expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceNorm {
    /// Mean over all pairs; cross-label pairs contribute zero.
    #[default]
    AllPairs,
    /// Mean over same-label pairs only.
    SameClassPairs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub step: usize,
    pub uniformity: f64,
    pub tolerance: f64,
    pub t: f64,
    pub n_samples: usize,
    pub probe_acc: Option<f64>,
}

impl MetricReport {
    pub fn compute(emb: &LabeledEmbeddings, t: f64, norm: ToleranceNorm, step: usize) -> Result<Self> {
        Ok(MetricReport {
            step,
            uniformity: uniformity(emb, t)?,
            tolerance: tolerance(emb, norm)?,
            t,
            n_samples: emb.len(),
            probe_acc: None,
        })
    }
}

fn require_pairs(emb: &LabeledEmbeddings) -> Result<usize> {
    let n = emb.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    Ok(n)
}

/// `log E[exp(−t ‖z_x − z_y‖²)]` over distinct pairs.
pub fn uniformity(emb: &LabeledEmbeddings, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::config("metrics.t", format!("must be > 0, got {t}")));
    }
    let n = require_pairs(emb)?;
    let mut terms = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let zi = emb.z.row(i);
        for j in i + 1..n {
            terms.push(-t * numerics::squared_distance(zi, emb.z.row(j)));
        }
    }
    let value = log_sum_exp(&terms)? - math::ln(terms.len() as f64);
    Ok(value.min(0.0))
}

/// `E[z_xᵀ z_y · 1[l(z_x) = l(z_y)]]` over distinct pairs.
pub fn tolerance(emb: &LabeledEmbeddings, norm: ToleranceNorm) -> Result<f64> {
    let n = require_pairs(emb)?;
    let mut row_sums = Vec::with_capacity(n);
    let mut same_pairs = 0usize;
    for i in 0..n {
        let zi = emb.z.row(i);
        let mut acc = 0.0;
        for j in i + 1..n {
            if emb.labels[i] == emb.labels[j] {
                acc += dot(zi, emb.z.row(j));
                same_pairs += 1;
            }
        }
        row_sums.push(acc);
    }
    let denom = match norm {
        ToleranceNorm::AllPairs => n * (n - 1) / 2,
        ToleranceNorm::SameClassPairs if same_pairs == 0 => return Ok(0.0),
        ToleranceNorm::SameClassPairs => same_pairs,
    };
    Ok((pairwise_sum(&row_sums) / denom as f64).clamp(-1.0, 1.0))
}

/// Reservoir sample (Algorithm R) of at most `max_rows` rows, kept in their
/// original order.
pub fn reservoir_subsample(emb: &LabeledEmbeddings, max_rows: usize, seed: u64) -> LabeledEmbeddings {
    if emb.len() <= max_rows {
        return emb.clone();
    }
    let mut rng = CounterRng::new(seed);
    let mut reservoir: Vec<usize> = (0..max_rows).collect();
    for i in max_rows..emb.len() {
        let j = rng.below(i as u64 + 1) as usize;
        if j < max_rows {
            reservoir[j] = i;
        }
    }
    reservoir.sort_unstable();
    emb.select(&reservoir)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub num_classes: usize,
}

/// Softmax linear classifier on frozen embeddings, trained by full-batch
/// gradient descent from zero weights, scored on `test`.
pub fn linear_probe(
    train: &LabeledEmbeddings,
    test: &LabeledEmbeddings,
    epochs: usize,
    lr: f64,
) -> Result<ProbeOutcome> {
    if train.dim() != test.dim() {
        return Err(Error::DimMismatch {
            expected: train.dim(),
            found: test.dim(),
        });
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyInput);
    }
    let classes = train.num_classes();
    if let Some(&l) = test.labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelMismatch(format!(
            "test label {l} never appears in the {classes}-class training set"
        )));
    }
    let d = train.dim();
    let mut weights = Matrix::zeros(d, classes);
    let mut bias = alloc::vec![0.0; classes];
    for _ in 0..epochs {
        let logits = affine(&train.z, &weights, &bias);
        let grad = cross_entropy(&logits, &train.labels)?.grad;
        let gw = numerics::matmul_at_b(&train.z, &grad);
        for (w, g) in weights.as_mut_slice().iter_mut().zip(gw.as_slice()) {
            *w -= lr * g;
        }
        for row in grad.iter_rows() {
            for (b, g) in bias.iter_mut().zip(row) {
                *b -= lr * g;
            }
        }
    }
    let predictions = argmax_rows(&affine(&test.z, &weights, &bias));
    let correct = predictions
        .iter()
        .zip(&test.labels)
        .filter(|(p, t)| p == t)
        .count();
    Ok(ProbeOutcome {
        accuracy: correct as f64 / test.len() as f64,
        predictions,
        num_classes: classes,
    })
}

pub(crate) fn affine(x: &Matrix, weights: &Matrix, bias: &[f64]) -> Matrix {
    let mut out = numerics::matmul(x, weights);
    for i in 0..out.rows() {
        for (o, b) in out.row_mut(i).iter_mut().zip(bias) {
            *o += b;
        }
    }
    out
}

/// Index of the largest entry per row; ties go to the lowest index.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.iter_rows()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassWiseAccuracy {
    /// Recall per class present in the ground truth.
    pub per_class: BTreeMap<usize, f64>,
    pub macro_average: f64,
}

pub fn class_wise_accuracy(pred: &[usize], truth: &[usize]) -> Result<ClassWiseAccuracy> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        let e = counts.entry(t).or_default();
        e.1 += 1;
        if p == t {
            e.0 += 1;
        }
    }
    let per_class: BTreeMap<usize, f64> = counts
        .into_iter()
        .map(|(c, (hit, total))| (c, hit as f64 / total as f64))
        .collect();
    let macro_average = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    Ok(ClassWiseAccuracy {
        per_class,
        macro_average,
    })
}
