//! MLP encoder `f` and projection head `g` with hand-written backprop.
//!
//! `f` is a stack of dense layers (ReLU on hidden layers, identity on the
//! layer that emits `h`). `g` is `linear → batch norm → ReLU → linear`.
//! Gradients can be injected at two depths: at `z` (flowing through `g` and
//! then `f`) and directly at `h`; [`backward`] sums both contributions.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Tensor;
use crate::math;
use crate::numerics::{matmul, matmul_a_bt, matmul_at_b, Matrix};
use crate::rng::CounterRng;
use crate::{Error, Result};

/// Small enough that normalized batch variance is 1 to within 1e-6.
pub const BN_EPS: f64 = 1e-9;
/// Fraction of the running statistics kept at each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn code(self) -> f64 {
        match self {
            Activation::Identity => 0.0,
            Activation::Relu => 1.0,
        }
    }

    fn from_code(code: f64) -> Result<Self> {
        match code {
            c if c == 0.0 => Ok(Activation::Identity),
            c if c == 1.0 => Ok(Activation::Relu),
            other => Err(Error::Checkpoint(format!("unknown activation code {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Architecture of `f` and `g` (input width comes from the data).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_d_h")]
    pub d_h: usize,
    /// Activation of the layer that emits `h`.
    #[serde(default = "default_h_activation")]
    pub h_activation: Activation,
    #[serde(default = "default_head_hidden")]
    pub head_hidden: usize,
    #[serde(default = "default_d_z")]
    pub d_z: usize,
}

fn default_hidden() -> Vec<usize> {
    vec![256, 256]
}
fn default_d_h() -> usize {
    64
}
fn default_h_activation() -> Activation {
    Activation::Identity
}
fn default_head_hidden() -> usize {
    64
}
fn default_d_z() -> usize {
    32
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: default_hidden(),
            d_h: default_d_h(),
            h_activation: default_h_activation(),
            head_hidden: default_head_hidden(),
            d_z: default_d_z(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::config("encoder.hidden", "layer widths must be >= 1"));
        }
        for (field, v) in [
            ("encoder.d_h", self.d_h),
            ("encoder.head_hidden", self.head_hidden),
            ("encoder.d_z", self.d_z),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        Ok(())
    }
}

/// `y = act(x W + b)` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut CounterRng) -> Self {
        let limit = math::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out)
            .map(|_| rng.uniform_range(-limit, limit))
            .collect();
        Dense {
            weight: Matrix::from_raw(fan_in, fan_out, data),
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    /// Pre-activation `x W + b`.
    pub fn linear(&self, x: &Matrix) -> Matrix {
        let mut out = matmul(x, &self.weight);
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        out
    }

    fn activate(&self, pre: &Matrix) -> Matrix {
        match self.activation {
            Activation::Identity => pre.clone(),
            Activation::Relu => relu(pre),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        self.activate(&self.linear(x))
    }

    /// Returns `(∂W, ∂b, ∂x)` given the layer input, its pre-activation and
    /// the gradient at the layer output.
    pub fn backward(&self, input: &Matrix, pre: &Matrix, grad_out: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
        let grad_pre = match self.activation {
            Activation::Identity => grad_out.clone(),
            Activation::Relu => relu_backward(pre, grad_out),
        };
        let gw = matmul_at_b(input, &grad_pre);
        let gb = column_sums(&grad_pre);
        let gx = matmul_a_bt(&grad_pre, &self.weight);
        (gw, gb, gx)
    }
}

fn relu(m: &Matrix) -> Matrix {
    let (r, c) = m.shape();
    Matrix::from_raw(r, c, m.as_slice().iter().map(|&v| v.max(0.0)).collect())
}

fn relu_backward(pre: &Matrix, grad: &Matrix) -> Matrix {
    let (r, c) = pre.shape();
    Matrix::from_raw(
        r,
        c,
        pre.as_slice()
            .iter()
            .zip(grad.as_slice())
            .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
            .collect(),
    )
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// `g`: linear → batch norm → ReLU → linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub bn_running_mean: Vec<f64>,
    pub bn_running_var: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Dense>,
    pub head: ProjectionHead,
}

impl EncoderParams {
    pub fn init(d_in: usize, cfg: &EncoderConfig, rng: &CounterRng) -> Result<Self> {
        cfg.validate()?;
        if d_in == 0 {
            return Err(Error::config("encoder", "input width must be >= 1"));
        }
        let mut widths = vec![d_in];
        widths.extend(&cfg.hidden);
        widths.push(cfg.d_h);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { cfg.h_activation } else { Activation::Relu };
                Dense::init(w[0], w[1], act, &mut rng.substream(i as u64))
            })
            .collect();
        let base = widths.len() as u64;
        let first = Dense::init(cfg.d_h, cfg.head_hidden, Activation::Relu, &mut rng.substream(base));
        let second = Dense::init(cfg.head_hidden, cfg.d_z, Activation::Identity, &mut rng.substream(base + 1));
        Ok(EncoderParams {
            layers,
            head: ProjectionHead {
                w1: first.weight,
                b1: first.bias,
                bn_gamma: vec![1.0; cfg.head_hidden],
                bn_beta: vec![0.0; cfg.head_hidden],
                bn_running_mean: vec![0.0; cfg.head_hidden],
                bn_running_var: vec![1.0; cfg.head_hidden],
                w2: second.weight,
                b2: second.bias,
            },
        })
    }

    pub fn d_in(&self) -> usize {
        self.layers.first().map_or(self.head.w1.rows(), Dense::fan_in)
    }

    pub fn d_h(&self) -> usize {
        self.head.w1.rows()
    }

    pub fn d_z(&self) -> usize {
        self.head.w2.cols()
    }

    /// Checks that consecutive layer widths chain and batch-norm variances
    /// are positive.
    pub fn validate(&self) -> Result<()> {
        let mut width = self.d_in();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.fan_in() != width || layer.bias.len() != layer.fan_out() {
                return Err(Error::Checkpoint(format!("encoder layer {i} does not chain")));
            }
            width = layer.fan_out();
        }
        let h = &self.head;
        let k = h.w1.cols();
        if h.w1.rows() != width
            || h.b1.len() != k
            || [&h.bn_gamma, &h.bn_beta, &h.bn_running_mean, &h.bn_running_var]
                .iter()
                .any(|v| v.len() != k)
            || h.w2.rows() != k
            || h.b2.len() != h.w2.cols()
        {
            return Err(Error::Checkpoint("projection head shapes are inconsistent".into()));
        }
        if h.bn_running_var.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Checkpoint("running variance must be positive".into()));
        }
        Ok(())
    }

    /// Folds a train-mode trace's batch statistics into the running ones.
    pub fn update_running_stats(&mut self, trace: &ForwardTrace) {
        if let Some(head) = trace.head.as_ref().filter(|_| trace.mode == Mode::Train) {
            let h = &mut self.head;
            for k in 0..h.bn_running_mean.len() {
                h.bn_running_mean[k] = BN_MOMENTUM * h.bn_running_mean[k] + (1.0 - BN_MOMENTUM) * head.mean[k];
                h.bn_running_var[k] = BN_MOMENTUM * h.bn_running_var[k] + (1.0 - BN_MOMENTUM) * head.var[k];
            }
        }
    }

    /// Trainable slices in a fixed order; matches [`EncoderGrads::slices`].
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(&mut l.bias);
        }
        let h = &mut self.head;
        out.push(h.w1.as_mut_slice());
        out.push(&mut h.b1);
        out.push(&mut h.bn_gamma);
        out.push(&mut h.bn_beta);
        out.push(h.w2.as_mut_slice());
        out.push(&mut h.b2);
        out
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push(Tensor::matrix(format!("encoder.{i}.weight"), &l.weight));
            out.push(Tensor::vector(format!("encoder.{i}.bias"), &l.bias));
        }
        let h = &self.head;
        out.push(Tensor::matrix("head.w1".to_string(), &h.w1));
        out.push(Tensor::vector("head.b1".to_string(), &h.b1));
        out.push(Tensor::vector("head.bn_gamma".to_string(), &h.bn_gamma));
        out.push(Tensor::vector("head.bn_beta".to_string(), &h.bn_beta));
        out.push(Tensor::vector("head.bn_running_mean".to_string(), &h.bn_running_mean));
        out.push(Tensor::vector("head.bn_running_var".to_string(), &h.bn_running_var));
        out.push(Tensor::matrix("head.w2".to_string(), &h.w2));
        out.push(Tensor::vector("head.b2".to_string(), &h.b2));
        let codes: Vec<f64> = self.layers.iter().map(|l| l.activation.code()).collect();
        out.push(Tensor::vector("meta.activations".to_string(), &codes));
        out
    }

    pub fn from_tensors(tensors: &[Tensor]) -> Result<Self> {
        let find = |name: &str| -> Result<&Tensor> {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let codes = find("meta.activations")?.as_vector()?;
        let mut layers = Vec::with_capacity(codes.len());
        for (i, &code) in codes.iter().enumerate() {
            layers.push(Dense {
                weight: find(&format!("encoder.{i}.weight"))?.as_matrix()?,
                bias: find(&format!("encoder.{i}.bias"))?.as_vector()?,
                activation: Activation::from_code(code)?,
            });
        }
        let params = EncoderParams {
            layers,
            head: ProjectionHead {
                w1: find("head.w1")?.as_matrix()?,
                b1: find("head.b1")?.as_vector()?,
                bn_gamma: find("head.bn_gamma")?.as_vector()?,
                bn_beta: find("head.bn_beta")?.as_vector()?,
                bn_running_mean: find("head.bn_running_mean")?.as_vector()?,
                bn_running_var: find("head.bn_running_var")?.as_vector()?,
                w2: find("head.w2")?.as_matrix()?,
                b2: find("head.b2")?.as_vector()?,
            },
        };
        params.validate()?;
        Ok(params)
    }
}

/// Gradients shaped like the trainable parts of [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub layers: Vec<(Matrix, Vec<f64>)>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl EncoderGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in &self.layers {
            out.push(w.as_slice());
            out.push(b);
        }
        out.push(self.w1.as_slice());
        out.push(&self.b1);
        out.push(&self.bn_gamma);
        out.push(&self.bn_beta);
        out.push(self.w2.as_slice());
        out.push(&self.b2);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
struct HeadTrace {
    pre_bn: Matrix,
    normalized: Matrix,
    mean: Vec<f64>,
    var: Vec<f64>,
    inv_std: Vec<f64>,
    post_bn: Matrix,
    hidden: Matrix,
}

/// Intermediate values kept for [`backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    mode: Mode,
    /// Input to each encoder layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of each encoder layer.
    pre: Vec<Matrix>,
    h: Matrix,
    head: Option<HeadTrace>,
}

impl ForwardTrace {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.h.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub h: Matrix,
    pub z: Matrix,
    pub trace: ForwardTrace,
}

fn check_input(params: &EncoderParams, x: &Matrix) -> Result<()> {
    if x.cols() != params.d_in() {
        return Err(Error::DimMismatch {
            expected: params.d_in(),
            found: x.cols(),
        });
    }
    Ok(())
}

fn encode(params: &EncoderParams, x: &Matrix) -> (Vec<Matrix>, Vec<Matrix>, Matrix) {
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut cur = x.clone();
    for layer in &params.layers {
        let p = layer.linear(&cur);
        let next = layer.activate(&p);
        inputs.push(core::mem::replace(&mut cur, next));
        pre.push(p);
    }
    (inputs, pre, cur)
}

/// Encoder only: `h = f(x)`. The trace supports [`backward`] without a
/// projection-head gradient.
pub fn forward_h(params: &EncoderParams, x: &Matrix) -> Result<(Matrix, ForwardTrace)> {
    check_input(params, x)?;
    let (inputs, pre, h) = encode(params, x);
    let trace = ForwardTrace {
        mode: Mode::Train,
        inputs,
        pre,
        h: h.clone(),
        head: None,
    };
    Ok((h, trace))
}

/// `h = f(x)`, `z = g(h)`. Batch norm uses batch statistics in
/// [`Mode::Train`] and running statistics in [`Mode::Eval`].
pub fn forward(params: &EncoderParams, x: &Matrix, mode: Mode) -> Result<Forward> {
    check_input(params, x)?;
    let (inputs, pre, h) = encode(params, x);
    let head = &params.head;
    let n = h.rows();
    let k = head.w1.cols();

    let first = Dense {
        weight: head.w1.clone(),
        bias: head.b1.clone(),
        activation: Activation::Identity,
    };
    let pre_bn = first.linear(&h);
    let (mean, var) = match mode {
        Mode::Train => batch_moments(&pre_bn),
        Mode::Eval => (head.bn_running_mean.clone(), head.bn_running_var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + BN_EPS)).collect();
    let mut normalized = Vec::with_capacity(n * k);
    let mut post_bn = Vec::with_capacity(n * k);
    for row in pre_bn.iter_rows() {
        for j in 0..k {
            let xh = (row[j] - mean[j]) * inv_std[j];
            normalized.push(xh);
            post_bn.push(head.bn_gamma[j] * xh + head.bn_beta[j]);
        }
    }
    let normalized = Matrix::from_raw(n, k, normalized);
    let post_bn = Matrix::from_raw(n, k, post_bn);
    let hidden = relu(&post_bn);
    let second = Dense {
        weight: head.w2.clone(),
        bias: head.b2.clone(),
        activation: Activation::Identity,
    };
    let z = second.linear(&hidden);
    Ok(Forward {
        h: h.clone(),
        z,
        trace: ForwardTrace {
            mode,
            inputs,
            pre,
            h,
            head: Some(HeadTrace {
                pre_bn,
                normalized,
                mean,
                var,
                inv_std,
                post_bn,
                hidden,
            }),
        },
    })
}

fn batch_moments(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let mean: Vec<f64> = column_sums(m).into_iter().map(|s| s / n).collect();
    let mut var = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    (mean, var.into_iter().map(|s| s / n).collect())
}

/// Parameter gradients from gradients at `h` and (optionally) at `z`.
pub fn backward(
    params: &EncoderParams,
    trace: &ForwardTrace,
    grad_h: &Matrix,
    grad_z: Option<&Matrix>,
) -> Result<EncoderGrads> {
    if trace.mode != Mode::Train {
        return Err(Error::StaleTrace("trace comes from an eval-mode forward".into()));
    }
    if trace.inputs.len() != params.layers.len() {
        return Err(Error::StaleTrace("layer count differs from the parameters".into()));
    }
    if grad_h.shape() != trace.h.shape() {
        return Err(Error::StaleTrace(format!(
            "grad_h is {:?}, h is {:?}",
            grad_h.shape(),
            trace.h.shape()
        )));
    }
    let head = &params.head;
    let n = trace.h.rows();
    let k = head.w1.cols();

    let mut total_h = grad_h.clone();
    let (w1, b1, bn_gamma, bn_beta, w2, b2) = match (grad_z, &trace.head) {
        (Some(gz), Some(ht)) => {
            if gz.shape() != (n, head.w2.cols()) {
                return Err(Error::StaleTrace(format!("grad_z is {:?}", gz.shape())));
            }
            let gw2 = matmul_at_b(&ht.hidden, gz);
            let gb2 = column_sums(gz);
            let g_hidden = matmul_a_bt(gz, &head.w2);
            let g_post = relu_backward(&ht.post_bn, &g_hidden);

            let mut g_gamma = vec![0.0; k];
            let mut g_beta = vec![0.0; k];
            let mut sum_gxh = vec![0.0; k];
            let mut sum_gxh_xh = vec![0.0; k];
            for i in 0..n {
                for j in 0..k {
                    let g = g_post.get(i, j);
                    let xh = ht.normalized.get(i, j);
                    g_gamma[j] += g * xh;
                    g_beta[j] += g;
                    let gxh = g * head.bn_gamma[j];
                    sum_gxh[j] += gxh;
                    sum_gxh_xh[j] += gxh * xh;
                }
            }
            let nf = n as f64;
            let mut g_pre = Vec::with_capacity(n * k);
            for i in 0..n {
                for j in 0..k {
                    let gxh = g_post.get(i, j) * head.bn_gamma[j];
                    let xh = ht.normalized.get(i, j);
                    g_pre.push(ht.inv_std[j] / nf * (nf * gxh - sum_gxh[j] - xh * sum_gxh_xh[j]));
                }
            }
            let g_pre = Matrix::from_raw(n, k, g_pre);
            let gw1 = matmul_at_b(&trace.h, &g_pre);
            let gb1 = column_sums(&g_pre);
            let g_from_head = matmul_a_bt(&g_pre, &head.w1);
            for (t, g) in total_h.as_mut_slice().iter_mut().zip(g_from_head.as_slice()) {
                *t += g;
            }
            (gw1, gb1, g_gamma, g_beta, gw2, gb2)
        }
        (Some(_), None) => {
            return Err(Error::StaleTrace("trace has no projection-head activations".into()))
        }
        (None, _) => (
            Matrix::zeros(head.w1.rows(), k),
            vec![0.0; k],
            vec![0.0; k],
            vec![0.0; k],
            Matrix::zeros(k, head.w2.cols()),
            vec![0.0; head.w2.cols()],
        ),
    };

    let mut layers = Vec::with_capacity(params.layers.len());
    let mut grad = total_h;
    for (idx, layer) in params.layers.iter().enumerate().rev() {
        let (gw, gb, gx) = layer.backward(&trace.inputs[idx], &trace.pre[idx], &grad);
        layers.push((gw, gb));
        grad = gx;
    }
    layers.reverse();
    Ok(EncoderGrads {
        layers,
        w1,
        b1,
        bn_gamma,
        bn_beta,
        w2,
        b2,
    })
}

/// Describes an encoder for diagnostics (`16-256-256-64 | 64-bn-32`).
pub fn describe(params: &EncoderParams) -> String {
    let mut s = format!("{}", params.d_in());
    for l in &params.layers {
        s.push_str(&format!("-{}", l.fan_out()));
    }
    s.push_str(&format!(" | {}-bn-{}", params.head.w1.cols(), params.d_z()));
    s
}
