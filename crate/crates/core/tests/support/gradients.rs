//! Finite-difference suites. Each returns the number of cases checked, or
//! the first failing case.

use std::f64::consts::{FRAC_PI_2, PI};

use acl_core::encoder::{self, EncoderConfig, EncoderParams, Mode};
use acl_core::losses::{self, build_pair_relation, LossConfig, PairBatch, PairRelation};
use acl_core::CounterRng;

use super::*;

pub type SuiteResult = Result<usize, String>;

fn shape(rng: &mut CounterRng) -> (usize, usize) {
    (rng.inclusive(2, 8), rng.inclusive(3, 16))
}

pub fn nt_xent(cases: usize) -> SuiteResult {
    let mut rng = CounterRng::new(101);
    for case in 0..cases {
        let (n, d) = shape(&mut rng);
        let tau = rng.uniform_range(0.1, 1.0);
        let z = random_rows(&mut rng, 2 * n, d);
        let h = random_rows(&mut rng, 2 * n, 3);
        let batch = PairBatch::new(matrix_of(&z), matrix_of(&h)).unwrap();
        let r = losses::nt_xent(&batch, tau).unwrap();
        let mut f = |x: &[f64]| {
            let b = PairBatch::new(matrix_of(&unflatten(x, d)), matrix_of(&h)).unwrap();
            losses::nt_xent(&b, tau).unwrap().value
        };
        if let Some(e) = check_gradient(&flat(&z), r.grad.as_slice(), &mut f) {
            return Err(format!("case {case} (n={n}, d={d}, tau={tau}): {e}"));
        }
    }
    Ok(cases)
}

fn smooth_margin_rows(rng: &mut CounterRng, rows: usize, d: usize, positive: &dyn Fn(usize, usize) -> bool, margin: f64) -> Rows {
    sample_rows(rng, rows, d, &|h| {
        let (gap, max_cos) = margin_smoothness(h, positive, margin);
        gap > 1e-3 && max_cos <= 0.99
    })
}

pub fn angular_margin(cases: usize) -> SuiteResult {
    let mut rng = CounterRng::new(102);
    for case in 0..cases {
        let (n, d) = shape(&mut rng);
        let margin = if case % 2 == 0 { FRAC_PI_2 } else { rng.uniform_range(0.3, PI) };
        let h = smooth_margin_rows(&mut rng, 2 * n, d, &pair_positive, margin);
        let rel = build_pair_relation(n);
        let r = losses::angular_margin(&matrix_of(&h), &rel, margin).unwrap();
        let mut f = |x: &[f64]| losses::angular_margin(&matrix_of(&unflatten(x, d)), &rel, margin).unwrap().value;
        if let Some(e) = check_gradient(&flat(&h), r.grad.as_slice(), &mut f) {
            return Err(format!("case {case} (n={n}, d={d}, m={margin}): {e}"));
        }
    }
    Ok(cases)
}

pub fn acl(cases: usize) -> SuiteResult {
    let mut rng = CounterRng::new(103);
    for case in 0..cases {
        let (n, dz) = shape(&mut rng);
        let dh = rng.inclusive(3, 16);
        let cfg = LossConfig::new(rng.uniform_range(0.1, 1.0), FRAC_PI_2, rng.uniform()).unwrap();
        let z = random_rows(&mut rng, 2 * n, dz);
        let h = smooth_margin_rows(&mut rng, 2 * n, dh, &pair_positive, cfg.margin);
        let rel = build_pair_relation(n);
        let r = losses::acl(&PairBatch::new(matrix_of(&z), matrix_of(&h)).unwrap(), &rel, &cfg).unwrap();
        let mut fz = |x: &[f64]| {
            let b = PairBatch::new(matrix_of(&unflatten(x, dz)), matrix_of(&h)).unwrap();
            losses::acl(&b, &rel, &cfg).unwrap().value
        };
        if let Some(e) = check_gradient(&flat(&z), r.grad_z.as_slice(), &mut fz) {
            return Err(format!("case {case} z: {e}"));
        }
        let mut fh = |x: &[f64]| {
            let b = PairBatch::new(matrix_of(&z), matrix_of(&unflatten(x, dh))).unwrap();
            losses::acl(&b, &rel, &cfg).unwrap().value
        };
        if let Some(e) = check_gradient(&flat(&h), r.grad_h.as_slice(), &mut fh) {
            return Err(format!("case {case} h: {e}"));
        }
    }
    Ok(cases)
}

fn labels(rng: &mut CounterRng, n: usize, classes: usize) -> Vec<usize> {
    (0..n).map(|_| rng.below(classes as u64) as usize).collect()
}

pub fn cross_entropy(cases: usize) -> SuiteResult {
    let mut rng = CounterRng::new(104);
    for case in 0..cases {
        let n = rng.inclusive(1, 16);
        let c = rng.inclusive(2, 10);
        let y = labels(&mut rng, n, c);
        let logits: Rows = random_rows(&mut rng, n, c).into_iter().map(|r| r.iter().map(|v| 3.0 * v).collect()).collect();
        let r = losses::cross_entropy(&matrix_of(&logits), &y).unwrap();
        let mut f = |x: &[f64]| losses::cross_entropy(&matrix_of(&unflatten(x, c)), &y).unwrap().value;
        if let Some(e) = check_gradient(&flat(&logits), r.grad.as_slice(), &mut f) {
            return Err(format!("case {case}: {e}"));
        }
    }
    Ok(cases)
}

pub fn supervised_combined(cases: usize) -> SuiteResult {
    let mut rng = CounterRng::new(105);
    for case in 0..cases {
        let n = rng.inclusive(2, 16);
        let c = rng.inclusive(2, 5);
        let d = rng.inclusive(3, 16);
        let y = labels(&mut rng, n, c);
        let cfg = LossConfig::new(0.2, rng.uniform_range(0.5, PI), rng.uniform()).unwrap();
        let same = |i: usize, j: usize| y[i] == y[j];
        let logits = random_rows(&mut rng, n, c);
        let h = smooth_margin_rows(&mut rng, n, d, &same, cfg.margin);
        let r = losses::supervised_combined(&matrix_of(&logits), &matrix_of(&h), &y, &cfg).unwrap();
        let mut fl = |x: &[f64]| {
            losses::supervised_combined(&matrix_of(&unflatten(x, c)), &matrix_of(&h), &y, &cfg).unwrap().value
        };
        if let Some(e) = check_gradient(&flat(&logits), r.grad_logits.as_slice(), &mut fl) {
            return Err(format!("case {case} logits: {e}"));
        }
        let mut fh = |x: &[f64]| {
            losses::supervised_combined(&matrix_of(&logits), &matrix_of(&unflatten(x, d)), &y, &cfg).unwrap().value
        };
        if let Some(e) = check_gradient(&flat(&h), r.grad_h.as_slice(), &mut fh) {
            return Err(format!("case {case} h: {e}"));
        }
    }
    Ok(cases)
}

/// Checks every trainable parameter of `params` against central differences
/// of `objective(params)`.
fn check_params(
    params: &EncoderParams,
    analytic: &[&[f64]],
    objective: &dyn Fn(&EncoderParams) -> f64,
) -> Option<String> {
    let mut probe = params.clone();
    for (t, grad) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let orig = probe.trainable_mut()[t][k];
            probe.trainable_mut()[t][k] = orig + FD_STEP;
            let up = objective(&probe);
            probe.trainable_mut()[t][k] = orig - FD_STEP;
            let down = objective(&probe);
            probe.trainable_mut()[t][k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            if !close(grad[k], numeric) {
                return Some(format!("tensor {t} entry {k}: analytic {} vs numeric {numeric}", grad[k]));
            }
        }
    }
    None
}

/// Draws parameters and inputs whose ReLU pre-activations all sit at least
/// `1e-3` from zero, so central differences never straddle a kink.
fn smooth_network(rng: &mut CounterRng, cfg: &EncoderConfig, rows: usize, d_in: usize) -> (EncoderParams, Rows) {
    for _ in 0..1000 {
        let params = EncoderParams::init(d_in, cfg, &CounterRng::new(rng.next_u64())).unwrap();
        let x = random_rows(rng, rows, d_in);
        if reference_forward(&params, &x).2 > 1e-3 {
            return (params, x);
        }
    }
    panic!("no smooth network found");
}

fn toy_config(rng: &mut CounterRng) -> EncoderConfig {
    EncoderConfig {
        hidden: vec![rng.inclusive(2, 8), rng.inclusive(2, 8)],
        d_h: rng.inclusive(2, 8),
        head_hidden: rng.inclusive(2, 8),
        d_z: rng.inclusive(2, 8),
        ..EncoderConfig::default()
    }
}

/// Encoder and head with fixed random output weights: the objective is
/// `Σ A ⊙ h + Σ B ⊙ z`, so `grad_h = A`, `grad_z = B`.
pub fn encoder(cases: usize) -> SuiteResult {
    let mut rng = CounterRng::new(106);
    for case in 0..cases {
        let cfg = toy_config(&mut rng);
        let rows = rng.inclusive(4, 8);
        let d_in = rng.inclusive(2, 8);
        let (params, x) = smooth_network(&mut rng, &cfg, rows, d_in);
        let a = random_rows(&mut rng, rows, cfg.d_h);
        let b = random_rows(&mut rng, rows, cfg.d_z);
        let xm = matrix_of(&x);
        let fwd = encoder::forward(&params, &xm, Mode::Train).unwrap();
        let grads = encoder::backward(&params, &fwd.trace, &matrix_of(&a), Some(&matrix_of(&b))).unwrap();
        let objective = |p: &EncoderParams| {
            let (h, z, _) = reference_forward(p, &x);
            let mut s = 0.0;
            for (hr, ar) in h.iter().zip(&a) {
                s += hr.iter().zip(ar).map(|(u, v)| u * v).sum::<f64>();
            }
            for (zr, br) in z.iter().zip(&b) {
                s += zr.iter().zip(br).map(|(u, v)| u * v).sum::<f64>();
            }
            s
        };
        if let Some(e) = check_params(&params, &grads.slices(), &objective) {
            return Err(format!("case {case} ({cfg:?}): {e}"));
        }
    }
    Ok(cases)
}

/// Forward, combined loss and backward composed end to end.
pub fn end_to_end(cases: usize) -> SuiteResult {
    let mut rng = CounterRng::new(107);
    let mut done = 0;
    while done < cases {
        let cfg = toy_config(&mut rng);
        let n = rng.inclusive(2, 4);
        let d_in = rng.inclusive(2, 6);
        let loss = LossConfig::new(rng.uniform_range(0.1, 1.0), FRAC_PI_2, rng.uniform()).unwrap();
        let (params, x) = smooth_network(&mut rng, &cfg, 2 * n, d_in);
        let (h, z, _) = reference_forward(&params, &x);
        let (gap, max_cos) = margin_smoothness(&h, &pair_positive, loss.margin);
        let degenerate = h.iter().chain(&z).any(|r| r.iter().all(|v| v.abs() < 1e-6));
        if gap < 1e-3 || max_cos > 0.99 || degenerate {
            continue;
        }
        let rel: PairRelation = build_pair_relation(n);
        let fwd = encoder::forward(&params, &matrix_of(&x), Mode::Train).unwrap();
        let r = losses::acl(&PairBatch::new(fwd.z.clone(), fwd.h.clone()).unwrap(), &rel, &loss).unwrap();
        let grads = encoder::backward(&params, &fwd.trace, &r.grad_h, Some(&r.grad_z)).unwrap();
        let objective = |p: &EncoderParams| naive_acl(&reference_forward(p, &x).1, &reference_forward(p, &x).0, loss.tau, loss.margin, loss.alpha);
        if let Some(e) = check_params(&params, &grads.slices(), &objective) {
            return Err(format!("case {done} ({cfg:?}, {loss:?}): {e}"));
        }
        done += 1;
    }
    Ok(cases)
}
