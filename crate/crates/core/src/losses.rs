//! Contrastive and angular-margin losses with analytic gradients.
//!
//! Every loss returns its value together with the gradient with respect to
//! the raw (unnormalized) embeddings it was given. Cosine normalization
//! happens inside each loss and is differentiated through.
//!
//! Reductions: the contrastive term is averaged over all `2N` anchors, the
//! margin term over all unordered row pairs `i < j`. Per-anchor (per-row)
//! terms are accumulated left to right and combined across rows with
//! [`pairwise_sum`](crate::numerics::pairwise_sum), so the result does not
//! depend on how the work is scheduled.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::math;
use crate::numerics::{
    self, log_sum_exp, matmul, normalize_rows, normalize_rows_backward, pairwise_sum, stable_arccos,
    Matrix,
};
use crate::{Error, Result};

/// Within this distance of ±1 the derivative of `acos` is not evaluated
/// directly.
pub const ARCCOS_ENDPOINT: f64 = 1e-7;

/// Temperature, angular margin and mixing weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Softmax temperature of the contrastive term, `> 0`.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Angular margin in radians, `(0, π]`.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Weight of the contrastive (or cross-entropy) term, `[0, 1]`.
    pub alpha: f64,
}

fn default_tau() -> f64 {
    0.2
}

fn default_margin() -> f64 {
    FRAC_PI_2
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: default_tau(),
            margin: FRAC_PI_2,
            alpha: 0.3,
        }
    }
}

impl LossConfig {
    pub fn new(tau: f64, margin: f64, alpha: f64) -> Result<Self> {
        let cfg = LossConfig { tau, margin, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("loss.tau", format!("must be > 0, got {}", self.tau)));
        }
        if !(self.margin > 0.0 && self.margin <= PI) {
            return Err(Error::config(
                "loss.margin",
                format!("must lie in (0, π], got {}", self.margin),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(
                "loss.alpha",
                format!("must lie in [0, 1], got {}", self.alpha),
            ));
        }
        Ok(())
    }
}

/// Two views per source item: rows `2k` and `2k + 1` of both matrices belong
/// to item `k`. `z` is the projection output, `h` the encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    z: Matrix,
    h: Matrix,
}

impl PairBatch {
    pub fn new(z: Matrix, h: Matrix) -> Result<Self> {
        if z.rows() != h.rows() {
            return Err(Error::ShapeMismatch(format!(
                "z has {} rows, h has {}",
                z.rows(),
                h.rows()
            )));
        }
        if z.rows() < 2 || z.rows() % 2 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "pair batch needs an even row count >= 2, got {}",
                z.rows()
            )));
        }
        for m in [&z, &h] {
            if m.iter_rows().any(|r| !(numerics::norm(r) >= numerics::ZERO_NORM)) {
                return Err(Error::ZeroVector);
            }
        }
        Ok(PairBatch { z, h })
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn h(&self) -> &Matrix {
        &self.h
    }

    pub fn n_pairs(&self) -> usize {
        self.z.rows() / 2
    }
}

/// Symmetric 0/1 pair matrix with an empty diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRelation {
    n: usize,
    positive: Vec<bool>,
}

impl PairRelation {
    /// Same-label pairs are positive.
    pub fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        let mut positive = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                positive[i * n + j] = i != j && labels[i] == labels[j];
            }
        }
        PairRelation { n, positive }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn is_positive(&self, i: usize, j: usize) -> bool {
        self.positive[i * self.n + j]
    }

    pub fn row_sum(&self, i: usize) -> usize {
        self.positive[i * self.n..(i + 1) * self.n]
            .iter()
            .filter(|&&p| p)
            .count()
    }
}

/// Relation for self-supervised batches: rows `2k` and `2k + 1` are the only
/// positives.
pub fn build_pair_relation(n_pairs: usize) -> PairRelation {
    let labels: Vec<usize> = (0..2 * n_pairs).map(|r| r / 2).collect();
    PairRelation::from_labels(&labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad: Matrix,
}

/// Combined loss with one gradient block per attachment point.
#[derive(Debug, Clone, PartialEq)]
pub struct AclResult {
    pub value: f64,
    pub contrastive: f64,
    pub margin: f64,
    /// `α · ∂L_C/∂z`.
    pub grad_z: Matrix,
    /// `(1 − α) · ∂L_A/∂h`.
    pub grad_h: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedResult {
    pub value: f64,
    pub cross_entropy: f64,
    pub margin: f64,
    /// `α · ∂CE/∂logits`.
    pub grad_logits: Matrix,
    /// `(1 − α) · ∂L_A/∂h`.
    pub grad_h: Matrix,
}

#[inline]
fn partner(i: usize) -> usize {
    i ^ 1
}

/// NT-Xent over `batch.z()`, averaged over all `2N` anchors.
pub fn nt_xent(batch: &PairBatch, tau: f64) -> Result<LossResult> {
    if !(tau > 0.0) {
        return Err(Error::config("loss.tau", format!("must be > 0, got {tau}")));
    }
    let (unit, norms) = normalize_rows(&batch.z)?;
    let n = unit.rows();
    let sims = numerics::matmul_a_bt(&unit, &unit);

    let mut terms = Vec::with_capacity(n);
    // coef[i][k] = ∂value/∂sim(i, k) for anchor i.
    let mut coef = vec![0.0; n * n];
    let mut logits = Vec::with_capacity(n - 1);
    let scale = 1.0 / (n as f64 * tau);
    for i in 0..n {
        logits.clear();
        logits.extend((0..n).filter(|&k| k != i).map(|k| sims.get(i, k) / tau));
        let lse = log_sum_exp(&logits)?;
        let p = partner(i);
        terms.push(lse - sims.get(i, p) / tau);
        for k in (0..n).filter(|&k| k != i) {
            let soft = math::exp(sims.get(i, k) / tau - lse);
            let target = if k == p { 1.0 } else { 0.0 };
            coef[i * n + k] = (soft - target) * scale;
        }
    }
    let value = (pairwise_sum(&terms) / n as f64).max(0.0);

    // sim(i, k) touches both unit rows, so the pull-back uses C + Cᵀ.
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            sym[i * n + k] = coef[i * n + k] + coef[k * n + i];
        }
    }
    let grad_unit = matmul(&Matrix::from_raw(n, n, sym), &unit);
    let grad = normalize_rows_backward(&unit, &norms, &grad_unit);
    Ok(LossResult { value, grad })
}

/// Pair term and `∂term/∂u` where `u = cos θ` of the two unit rows.
/// Angle between unit vectors. Near-parallel pairs use the chord length,
/// which stays accurate where `acos` loses digits to rounding in `u`.
fn unit_angle(a: &[f64], b: &[f64], u: f64) -> f64 {
    if u > 0.5 {
        let chord = numerics::squared_distance(a, b);
        2.0 * math::asin((0.5 * math::sqrt(chord)).min(1.0))
    } else {
        stable_arccos(u)
    }
}

fn margin_term(u: f64, theta: f64, positive: bool, margin: f64) -> (f64, f64) {
    if positive {
        let d = if u > 1.0 - ARCCOS_ENDPOINT {
            // θ/sin θ = 1 + e/3 + 2e²/15 + O(e³) with e = 1 − u.
            let e = (1.0 - u).max(0.0);
            -2.0 * (1.0 + e / 3.0 + 2.0 * e * e / 15.0)
        } else {
            -2.0 * theta * inv_sin_clamped(u)
        };
        (theta * theta, d)
    } else if theta >= margin {
        (0.0, 0.0)
    } else {
        let gap = margin - theta;
        (gap * gap, 2.0 * gap * inv_sin_clamped(u))
    }
}

/// `1 / sqrt(1 − u²)` with `u` held `ARCCOS_ENDPOINT` away from ±1.
#[inline]
fn inv_sin_clamped(u: f64) -> f64 {
    let lim = 1.0 - ARCCOS_ENDPOINT;
    let u = u.clamp(-lim, lim);
    1.0 / math::sqrt((1.0 - u) * (1.0 + u))
}

/// Squared-angle attraction for positive pairs and squared angular hinge at
/// `margin` for negative pairs, averaged over all unordered pairs of rows.
pub fn angular_margin(h: &Matrix, relation: &PairRelation, margin: f64) -> Result<LossResult> {
    if !(margin > 0.0 && margin <= PI) {
        return Err(Error::config(
            "loss.margin",
            format!("must lie in (0, π], got {margin}"),
        ));
    }
    let n = h.rows();
    if relation.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "relation covers {} rows, embeddings have {n}",
            relation.len()
        )));
    }
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let (unit, norms) = normalize_rows(h)?;
    let d = unit.cols();
    let n_pairs = (n * (n - 1) / 2) as f64;

    let mut row_terms = Vec::with_capacity(n);
    let mut grad_unit = Matrix::zeros(n, d);
    for i in 0..n {
        let mut acc = 0.0;
        for j in i + 1..n {
            let u = numerics::dot(unit.row(i), unit.row(j));
            let theta = unit_angle(unit.row(i), unit.row(j), u);
            let (f, df) = margin_term(u, theta, relation.is_positive(i, j), margin);
            acc += f;
            if df != 0.0 {
                let c = df / n_pairs;
                for k in 0..d {
                    let (ui, uj) = (unit.get(i, k), unit.get(j, k));
                    grad_unit.as_mut_slice()[i * d + k] += c * uj;
                    grad_unit.as_mut_slice()[j * d + k] += c * ui;
                }
            }
        }
        row_terms.push(acc);
    }
    let value = pairwise_sum(&row_terms) / n_pairs;
    let grad = normalize_rows_backward(&unit, &norms, &grad_unit);
    Ok(LossResult { value, grad })
}

/// `α · L_C(z) + (1 − α) · L_A(h)`.
pub fn acl(batch: &PairBatch, relation: &PairRelation, cfg: &LossConfig) -> Result<AclResult> {
    cfg.validate()?;
    let c = nt_xent(batch, cfg.tau)?;
    let a = angular_margin(&batch.h, relation, cfg.margin)?;
    Ok(AclResult {
        value: cfg.alpha * c.value + (1.0 - cfg.alpha) * a.value,
        contrastive: c.value,
        margin: a.value,
        grad_z: c.grad.scaled(cfg.alpha),
        grad_h: a.grad.scaled(1.0 - cfg.alpha),
    })
}

/// Mean softmax cross-entropy; gradient `(softmax − onehot) / rows`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<LossResult> {
    let (n, classes) = logits.shape();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let mut terms = Vec::with_capacity(n);
    let mut grad = Vec::with_capacity(n * classes);
    for (row, &label) in logits.iter_rows().zip(labels) {
        let lse = log_sum_exp(row)?;
        terms.push(lse - row[label]);
        for (k, &x) in row.iter().enumerate() {
            let target = if k == label { 1.0 } else { 0.0 };
            grad.push((math::exp(x - lse) - target) / n as f64);
        }
    }
    Ok(LossResult {
        value: (pairwise_sum(&terms) / n as f64).max(0.0),
        grad: Matrix::from_raw(n, classes, grad),
    })
}

/// `α · CE(logits) + (1 − α) · L_A(h)` with same-label pairs as positives.
pub fn supervised_combined(
    logits: &Matrix,
    h: &Matrix,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<SupervisedResult> {
    cfg.validate()?;
    if h.rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: h.rows(),
            right: labels.len(),
        });
    }
    let ce = cross_entropy(logits, labels)?;
    let a = angular_margin(h, &PairRelation::from_labels(labels), cfg.margin)?;
    Ok(SupervisedResult {
        value: cfg.alpha * ce.value + (1.0 - cfg.alpha) * a.value,
        cross_entropy: ce.value,
        margin: a.value,
        grad_logits: ce.grad.scaled(cfg.alpha),
        grad_h: a.grad.scaled(1.0 - cfg.alpha),
    })
}
