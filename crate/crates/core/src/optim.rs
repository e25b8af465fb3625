//! SGD and Adam over a list of parameter slices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    /// `lr = 0` is accepted and leaves parameters untouched.
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::config("optimizer.lr", format!("must be >= 0, got {lr}")));
        }
        Ok(Optimizer {
            kind,
            lr,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Applies one update. `params[i]` and `grads[i]` must have equal
    /// lengths, and the layout must not change between calls.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::LengthMismatch {
                left: params.len(),
                right: grads.len(),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::DimMismatch {
                    expected: p.len(),
                    found: g.len(),
                });
            }
        }
        if self.kind == OptimizerKind::Adam {
            if self.first_moment.is_empty() {
                self.first_moment = grads.iter().map(|g| vec![0.0; g.len()]).collect();
                self.second_moment = self.first_moment.clone();
            } else if self.first_moment.len() != grads.len()
                || self.first_moment.iter().zip(grads).any(|(m, g)| m.len() != g.len())
            {
                return Err(Error::ShapeMismatch("parameter layout changed between steps".into()));
            }
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (x, d) in p.iter_mut().zip(g.iter()) {
                        *x -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as f64;
                let c1 = 1.0 - math::pow(ADAM_BETA1, t);
                let c2 = 1.0 - math::pow(ADAM_BETA2, t);
                for (idx, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let m = &mut self.first_moment[idx];
                    let v = &mut self.second_moment[idx];
                    for k in 0..p.len() {
                        let gk = g[k];
                        m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * gk;
                        v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * gk * gk;
                        let m_hat = m[k] / c1;
                        let v_hat = v[k] / c2;
                        p[k] -= self.lr * m_hat / (math::sqrt(v_hat) + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl_grad(x: &[f64], center: &[f64]) -> Vec<f64> {
        x.iter().zip(center).map(|(a, c)| 2.0 * (a - c)).collect()
    }

    #[test]
    fn adam_step_moves_toward_minimum() {
        let center = [1.0, -2.0, 0.5];
        let mut x = vec![3.0, 3.0, -3.0];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1).unwrap();
        let before: Vec<f64> = x.clone();
        let g = bowl_grad(&x, &center);
        opt.step(vec![&mut x[..]], &[&g]).unwrap();
        for k in 0..3 {
            // First Adam step is lr · sign(g).
            assert!((x[k] - before[k] + 0.1 * g[k].signum()).abs() < 1e-6);
            assert!((x[k] - center[k]).abs() < (before[k] - center[k]).abs());
        }
        for _ in 0..2000 {
            let g = bowl_grad(&x, &center);
            opt.step(vec![&mut x[..]], &[&g]).unwrap();
        }
        for k in 0..3 {
            assert!((x[k] - center[k]).abs() < 1e-2);
        }
    }

    #[test]
    fn sgd_step() {
        let mut x = vec![1.0, 2.0];
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.5).unwrap();
        opt.step(vec![&mut x[..]], &[&[1.0, -2.0]]).unwrap();
        assert_eq!(x, vec![0.5, 3.0]);
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut x = vec![0.3, -0.7];
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.0).unwrap();
        for _ in 0..5 {
            opt.step(vec![&mut x[..]], &[&[0.4, 1.0]]).unwrap();
        }
        assert_eq!(x, vec![0.3, -0.7]);
    }

    #[test]
    fn layout_checks() {
        assert!(Optimizer::new(OptimizerKind::Sgd, -1.0).is_err());
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1).unwrap();
        let mut a = vec![0.0; 2];
        assert!(opt.step(vec![&mut a[..]], &[&[1.0]]).is_err());
        opt.step(vec![&mut a[..]], &[&[1.0, 1.0]]).unwrap();
        let mut b = vec![0.0; 3];
        assert!(opt.step(vec![&mut b[..]], &[&[1.0, 1.0, 1.0]]).is_err());
    }
}
