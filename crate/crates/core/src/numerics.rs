//! Scalar and vector primitives shared by every other module.
//!
//! Everything is computed in `f64`. Matrices are dense and row-major; the
//! layout is part of the checkpoint format.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::math;
use crate::{Error, Result};

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// A finite vector of `f64` components.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.iter().all(|c| c.is_finite()) {
            Ok(Vector(components))
        } else {
            Err(Error::NonFinite("vector"))
        }
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Dense row-major matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Skips the finiteness scan; callers guarantee the length.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(indices.len(), self.cols, data)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    math::sqrt(dot(v, v))
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Scales `v` to unit L2 norm.
pub fn l2_normalize(v: &[f64]) -> Result<Vector> {
    let n = norm(v);
    if !(n >= ZERO_NORM) {
        return Err(Error::ZeroVector);
    }
    Ok(Vector(v.iter().map(|x| x / n).collect()))
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if !(na >= ZERO_NORM && nb >= ZERO_NORM) {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `acos` with the argument hard-clamped to `[-1, 1]`.
#[inline]
pub fn stable_arccos(u: f64) -> f64 {
    math::acos(u.clamp(-1.0, 1.0))
}

/// `log Σ exp(xs)` with a max shift.
pub fn log_sum_exp(xs: &[f64]) -> Result<f64> {
    let max = xs
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let tail = pairwise_sum_by(xs.len(), |i| math::exp(xs[i] - max));
    Ok(max + math::ln(tail))
}

/// Pairwise (tree) summation: the association order is fixed by the length
/// alone, so any split of the work reproduces the same result.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_sum_by(xs.len(), |i| xs[i])
}

pub(crate) fn pairwise_sum_by(len: usize, term: impl Fn(usize) -> f64 + Copy) -> f64 {
    fn go(lo: usize, hi: usize, term: impl Fn(usize) -> f64 + Copy) -> f64 {
        if hi - lo <= 8 {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += term(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, term) + go(mid, hi, term)
        }
    }
    go(0, len, term)
}

/// `a · b` for `a: n×k`, `b: k×m`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul inner dimension");
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let dst = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (d, bv) in dst.iter_mut().zip(&b.data[p * m..(p + 1) * m]) {
                *d += av * bv;
            }
        }
    }
    Matrix::from_raw(n, m, out)
}

/// `aᵀ · b` for `a: n×k`, `b: n×m`.
pub fn matmul_at_b(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows, "matmul_at_b outer dimension");
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let brow = &b.data[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (d, bv) in out[p * m..(p + 1) * m].iter_mut().zip(brow) {
                *d += av * bv;
            }
        }
    }
    Matrix::from_raw(k, m, out)
}

/// `a · bᵀ` for `a: n×k`, `b: m×k`.
pub fn matmul_a_bt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_a_bt inner dimension");
    let (n, m) = (a.rows, b.rows);
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let arow = a.row(i);
        for j in 0..m {
            out.push(dot(arow, b.row(j)));
        }
    }
    Matrix::from_raw(n, m, out)
}

/// Row-normalizes `m`, returning the unit rows and the original norms.
pub(crate) fn normalize_rows(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut unit = Vec::with_capacity(m.data.len());
    let mut norms = Vec::with_capacity(m.rows);
    for r in m.iter_rows() {
        let n = norm(r);
        if !(n >= ZERO_NORM) {
            return Err(Error::ZeroVector);
        }
        norms.push(n);
        unit.extend(r.iter().map(|x| x / n));
    }
    Ok((Matrix::from_raw(m.rows, m.cols, unit), norms))
}

/// Pulls a gradient w.r.t. unit rows back to the raw rows:
/// `∂/∂x = (g − x̂ (x̂·g)) / ‖x‖`.
pub(crate) fn normalize_rows_backward(unit: &Matrix, norms: &[f64], grad_unit: &Matrix) -> Matrix {
    let mut out = Vec::with_capacity(unit.data.len());
    for (i, &n) in norms.iter().enumerate() {
        let u = unit.row(i);
        let g = grad_unit.row(i);
        let proj = dot(u, g);
        out.extend(u.iter().zip(g).map(|(uk, gk)| (gk - uk * proj) / n));
    }
    Matrix::from_raw(unit.rows, unit.cols, out)
}
