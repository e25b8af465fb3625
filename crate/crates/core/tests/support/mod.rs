//! Independent reference implementations used by the integration tests and
//! the acceptance harness: central finite differences, naive pair
//! enumeration of every loss and metric, and a layer-by-layer forward pass.
//! Nothing here calls the library's loss, metric or encoder code.
#![allow(dead_code)]

use acl_core::encoder::{Activation, EncoderParams, BN_EPS};
use acl_core::{CounterRng, Matrix};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-5;
pub const ABS_TOL: f64 = 1e-7;

pub type Rows = Vec<Vec<f64>>;

pub fn rows_of(m: &Matrix) -> Rows {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

pub fn matrix_of(rows: &Rows) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

pub fn random_rows(rng: &mut CounterRng, n: usize, d: usize) -> Rows {
    (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect()
}

/// `true` when `analytic` and `numeric` agree to the relative tolerance, or
/// to the absolute tolerance when both are near zero.
pub fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff < ABS_TOL || diff <= REL_TOL * analytic.abs().max(numeric.abs())
}

/// Worst mismatch between an analytic gradient and central differences of
/// `f` over every entry of `x`. Returns `None` when every entry is close.
pub fn check_gradient(x: &[f64], analytic: &[f64], f: &mut dyn FnMut(&[f64]) -> f64) -> Option<String> {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        probe[k] = x[k] + FD_STEP;
        let up = f(&probe);
        probe[k] = x[k] - FD_STEP;
        let down = f(&probe);
        probe[k] = x[k];
        let numeric = (up - down) / (2.0 * FD_STEP);
        if !close(analytic[k], numeric) {
            return Some(format!("entry {k}: analytic {} vs numeric {numeric}", analytic[k]));
        }
    }
    None
}

fn flatten(rows: &Rows) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

pub fn unflatten(flat: &[f64], cols: usize) -> Rows {
    flat.chunks(cols).map(<[f64]>::to_vec).collect()
}

pub fn flat(rows: &Rows) -> Vec<f64> {
    flatten(rows)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

pub fn unit(a: &[f64]) -> Vec<f64> {
    let n = dot(a, a).sqrt();
    a.iter().map(|v| v / n).collect()
}

/// NT-Xent anchor by anchor, with an explicit softmax denominator.
pub fn naive_nt_xent(z: &Rows, tau: f64) -> f64 {
    let m = z.len();
    let mut total = 0.0;
    for i in 0..m {
        let partner = i ^ 1;
        let num = (cosine(&z[i], &z[partner]) / tau).exp();
        let mut den = 0.0;
        for k in 0..m {
            if k != i {
                den += (cosine(&z[i], &z[k]) / tau).exp();
            }
        }
        total += -(num / den).ln();
    }
    total / m as f64
}

/// Angular margin loss over all unordered pairs; `positive(i, j)` decides `S_ij`.
pub fn naive_margin(h: &Rows, positive: &dyn Fn(usize, usize) -> bool, margin: f64) -> f64 {
    let m = h.len();
    let mut total = 0.0;
    let mut count = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let theta = cosine(&h[i], &h[j]).clamp(-1.0, 1.0).acos();
            total += if positive(i, j) {
                theta * theta
            } else {
                let gap = (margin - theta).max(0.0);
                gap * gap
            };
            count += 1.0;
        }
    }
    total / count
}

pub fn pair_positive(i: usize, j: usize) -> bool {
    i / 2 == j / 2 && i != j
}

pub fn naive_acl(z: &Rows, h: &Rows, tau: f64, margin: f64, alpha: f64) -> f64 {
    alpha * naive_nt_xent(z, tau) + (1.0 - alpha) * naive_margin(h, &pair_positive, margin)
}

pub fn naive_cross_entropy(logits: &Rows, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &l) in logits.iter().zip(labels) {
        let den: f64 = row.iter().map(|x| x.exp()).sum();
        total += -(row[l].exp() / den).ln();
    }
    total / logits.len() as f64
}

pub fn naive_supervised(logits: &Rows, h: &Rows, labels: &[usize], margin: f64, alpha: f64) -> f64 {
    let same = |i: usize, j: usize| labels[i] == labels[j];
    alpha * naive_cross_entropy(logits, labels) + (1.0 - alpha) * naive_margin(h, &same, margin)
}

/// `log mean exp(−t‖x − y‖²)` over unordered pairs of normalized rows.
pub fn naive_uniformity(z: &Rows, t: f64) -> f64 {
    let u: Rows = z.iter().map(|r| unit(r)).collect();
    let mut total = 0.0;
    let mut count = 0.0;
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            let d2: f64 = u[i].iter().zip(&u[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            total += (-t * d2).exp();
            count += 1.0;
        }
    }
    (total / count).ln()
}

/// Mean over unordered pairs of `cos · 1[same label]`; with `same_class_only`
/// the mean runs over same-label pairs instead.
pub fn naive_tolerance(z: &Rows, labels: &[usize], same_class_only: bool) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let same = labels[i] == labels[j];
            if same {
                total += cosine(&z[i], &z[j]);
            }
            if same || !same_class_only {
                count += 1.0;
            }
        }
    }
    if count == 0.0 {
        0.0
    } else {
        total / count
    }
}

/// Smallest `|θ − margin|` over negative pairs and largest `|cos|` over all
/// pairs; finite-difference cases stay away from both non-smooth spots.
pub fn margin_smoothness(h: &Rows, positive: &dyn Fn(usize, usize) -> bool, margin: f64) -> (f64, f64) {
    let mut hinge_gap = f64::INFINITY;
    let mut max_cos: f64 = 0.0;
    for i in 0..h.len() {
        for j in i + 1..h.len() {
            let c = cosine(&h[i], &h[j]);
            max_cos = max_cos.max(c.abs());
            if !positive(i, j) {
                hinge_gap = hinge_gap.min((c.clamp(-1.0, 1.0).acos() - margin).abs());
            }
        }
    }
    (hinge_gap, max_cos)
}

/// Layer-by-layer train-mode forward pass written against the parameter
/// fields directly. Returns `(h, z, smallest |pre-activation| at a ReLU)`.
pub fn reference_forward(p: &EncoderParams, x: &Rows) -> (Rows, Rows, f64) {
    let mut min_gap = f64::INFINITY;
    let mut relu = |v: f64| {
        min_gap = min_gap.min(v.abs());
        v.max(0.0)
    };
    let mut cur = x.clone();
    for layer in &p.layers {
        let (fin, fout) = (layer.weight.rows(), layer.weight.cols());
        cur = cur
            .iter()
            .map(|row| {
                (0..fout)
                    .map(|o| {
                        let mut s = layer.bias[o];
                        for i in 0..fin {
                            s += row[i] * layer.weight.get(i, o);
                        }
                        match layer.activation {
                            Activation::Relu => relu(s),
                            Activation::Identity => s,
                        }
                    })
                    .collect()
            })
            .collect();
    }
    let h = cur;
    let hd = &p.head;
    let k = hd.w1.cols();
    let a: Rows = h
        .iter()
        .map(|row| {
            (0..k)
                .map(|o| hd.b1[o] + (0..row.len()).map(|i| row[i] * hd.w1.get(i, o)).sum::<f64>())
                .collect()
        })
        .collect();
    let n = a.len() as f64;
    let mut post = a.clone();
    for j in 0..k {
        let mean = a.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = a.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
        for (r, row) in post.iter_mut().enumerate() {
            let xh = (a[r][j] - mean) / (var + BN_EPS).sqrt();
            row[j] = relu(hd.bn_gamma[j] * xh + hd.bn_beta[j]);
        }
    }
    let dz = hd.w2.cols();
    let z = post
        .iter()
        .map(|row| {
            (0..dz)
                .map(|o| hd.b2[o] + (0..k).map(|i| row[i] * hd.w2.get(i, o)).sum::<f64>())
                .collect()
        })
        .collect();
    (h, z, min_gap)
}

/// Draws rows until `accept` holds (at most 1000 attempts).
pub fn sample_rows(rng: &mut CounterRng, n: usize, d: usize, accept: &dyn Fn(&Rows) -> bool) -> Rows {
    for _ in 0..1000 {
        let rows = random_rows(rng, n, d);
        if accept(&rows) {
            return rows;
        }
    }
    panic!("no acceptable sample for n={n}, d={d}");
}

pub mod gradients;
pub mod oracles;
pub mod identities;
