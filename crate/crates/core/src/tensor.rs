//! Dense level-k tensors over R^d.
//!
//! A [`LevelTensor`] of level `k` holds the `d^k` coordinates of an element of
//! `(R^d)^{⊗k}` in row-major order: the multi-index `(i_1, …, i_k)` lives at
//! flat position `Σ_j i_j · d^(k-j)`, so the first index varies slowest.
//! Level 0 is a single scalar.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension stored densely without an explicit override.
pub const MAX_DIM: usize = 4;
/// Largest level stored densely without an explicit override.
pub const MAX_LEVEL: usize = 6;

/// Rejects `(dim, level)` pairs beyond the dense storage limits unless
/// `allow_large` is set.
pub fn check_size(dim: usize, level: usize, allow_large: bool) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !allow_large && (dim > MAX_DIM || level > MAX_LEVEL) {
        return Err(Error::TooLarge {
            dim,
            level,
            max_dim: MAX_DIM,
            max_level: MAX_LEVEL,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct LevelTensor {
    dim: usize,
    level: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    dim: usize,
    level: usize,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for LevelTensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        LevelTensor::from_vec(raw.dim, raw.level, raw.data)
    }
}

impl LevelTensor {
    pub fn zeros(dim: usize, level: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            dim,
            level,
            data: vec![0.0; dim.pow(level as u32)],
        }
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            dim,
            level: 0,
            data: vec![value],
        }
    }

    pub fn from_vec(dim: usize, level: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let expected = dim
            .checked_pow(level as u32)
            .ok_or_else(|| Error::InvalidArgument(format!("d^k overflows for d={dim}, k={level}")))?;
        if data.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "tensor of dim {dim} and level {level} needs {expected} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { dim, level, data })
    }

    /// A level-1 tensor holding the vector `v`.
    pub fn vector(v: &[f64]) -> Self {
        assert!(!v.is_empty(), "vector must be non-empty");
        Self {
            dim: v.len(),
            level: 1,
            data: v.to_vec(),
        }
    }

    /// `v^{⊗k}`.
    pub fn power(v: &[f64], level: usize) -> Self {
        let mut out = Self::scalar(v.len(), 1.0);
        let base = Self::vector(v);
        for _ in 0..level {
            out = out.tensor_product(&base).expect("same dim by construction");
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flat_index(&self, multi: &[usize]) -> Result<usize> {
        flat_index(self.dim, multi).and_then(|idx| {
            if multi.len() != self.level {
                Err(Error::InvalidArgument(format!(
                    "multi-index of length {} for a level-{} tensor",
                    multi.len(),
                    self.level
                )))
            } else {
                Ok(idx)
            }
        })
    }

    pub fn multi_index(&self, flat: usize) -> Result<Vec<usize>> {
        multi_index(self.dim, self.level, flat)
    }

    pub fn get(&self, multi: &[usize]) -> Result<f64> {
        Ok(self.data[self.flat_index(multi)?])
    }

    /// Outer product; the result has level `self.level + other.level` and
    /// entry `(I, J)` equal to `self[I] * other[J]`.
    pub fn tensor_product(&self, other: &LevelTensor) -> Result<LevelTensor> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for &a in &self.data {
            data.extend(other.data.iter().map(|&b| a * b));
        }
        Ok(LevelTensor {
            dim: self.dim,
            level: self.level + other.level,
            data,
        })
    }

    /// `acc + c·x`, elementwise.
    pub fn add_scaled(&self, x: &LevelTensor, c: f64) -> Result<LevelTensor> {
        let mut out = self.clone();
        out.add_scaled_mut(x, c)?;
        Ok(out)
    }

    pub fn add_scaled_mut(&mut self, x: &LevelTensor, c: f64) -> Result<()> {
        self.check_same_shape(x)?;
        for (a, &b) in self.data.iter_mut().zip(&x.data) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> LevelTensor {
        LevelTensor {
            dim: self.dim,
            level: self.level,
            data: self.data.iter().map(|&v| c * v).collect(),
        }
    }

    /// Max absolute entry.
    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// Sup norm of `self - other`.
    pub fn sup_distance(&self, other: &LevelTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    fn check_same_shape(&self, other: &LevelTensor) -> Result<()> {
        if self.dim != other.dim || self.level != other.level {
            return Err(Error::ShapeMismatch {
                expected_dim: self.dim,
                expected_level: self.level,
                dim: other.dim,
                level: other.level,
            });
        }
        Ok(())
    }
}

pub fn flat_index(dim: usize, multi: &[usize]) -> Result<usize> {
    let mut idx = 0usize;
    for &i in multi {
        if i >= dim {
            return Err(Error::IndexOutOfRange { index: i, bound: dim });
        }
        idx = idx * dim + i;
    }
    Ok(idx)
}

pub fn multi_index(dim: usize, level: usize, flat: usize) -> Result<Vec<usize>> {
    let len = dim.pow(level as u32);
    if flat >= len {
        return Err(Error::IndexOutOfRange {
            index: flat,
            bound: len,
        });
    }
    let mut out = vec![0; level];
    let mut rest = flat;
    for slot in out.iter_mut().rev() {
        *slot = rest % dim;
        rest /= dim;
    }
    Ok(out)
}
