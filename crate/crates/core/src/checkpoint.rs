//! Binary checkpoint encoding.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "ACL1" | version | { name_len | name (UTF-8) | rank | dim × rank | f64 LE × Π dims }*
//! ```
//!
//! Tensors follow each other until the end of the buffer. A rank-0 tensor
//! carries a single value.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::numerics::Matrix;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ACL1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn matrix(name: String, m: &Matrix) -> Self {
        Tensor {
            name,
            dims: alloc::vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn vector(name: String, v: &[f64]) -> Self {
        Tensor {
            name,
            dims: alloc::vec![v.len()],
            data: v.to_vec(),
        }
    }

    pub fn as_matrix(&self) -> Result<Matrix> {
        match self.dims[..] {
            [r, c] => Matrix::new(r, c, self.data.clone())
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", self.name))),
            _ => Err(Error::Checkpoint(format!("{} is not rank 2", self.name))),
        }
    }

    pub fn as_vector(&self) -> Result<Vec<f64>> {
        match self.dims[..] {
            [_] => Ok(self.data.clone()),
            _ => Err(Error::Checkpoint(format!("{} is not rank 1", self.name))),
        }
    }
}

pub fn encode(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::TruncatedFile)?;
        let bytes = self.buf.get(self.pos..end).ok_or(Error::TruncatedFile)?;
        self.pos = end;
        Ok(bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let head = &bytes[..bytes.len().min(4)];
    if head != &MAGIC[..head.len()] {
        return Err(Error::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    r.take(4)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let mut tensors = Vec::new();
    while !r.done() {
        let name_len = r.u32()? as usize;
        let name = core::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .into();
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(Error::TruncatedFile)?;
        let payload = r.take(count.checked_mul(8).ok_or(Error::TruncatedFile)?)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        tensors.push(Tensor { name, dims, data });
    }
    Ok(tensors)
}
