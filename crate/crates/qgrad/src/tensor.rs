//! Dense row-major tensor of 64-bit reals.
//!
//! Attacks divide by `max|g_i|`, which for real models can sit around
//! 1e-5 to 1e-4, so everything in this crate stays in f64.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense multi-dimensional array, row-major, f64 throughout.
///
/// Carries images `x` in `[0,1]^d`, gradients `g`, and perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from a shape and flat row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} wants {} elements, data has {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    /// 1-D tensor from a vector.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Number of rows when the tensor is interpreted as a matrix of
    /// examples (first dimension).
    pub fn num_rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Length of one row in the matrix interpretation (product of the
    /// trailing dimensions).
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    /// Borrow row `i` of an `n x d` tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.row_len();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.row_len();
        &mut self.data[i * d..(i + 1) * d]
    }

    /// Stack 1-D rows of equal length into an `n x d` tensor.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::ShapeMismatch(format!(
                    "row length {} != {}",
                    row.len(),
                    d
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            shape: vec![n, d],
            data,
        })
    }

    /// Largest absolute component, 0.0 for an empty tensor.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Euclidean norm.
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// True when every component lies in `[0, 1]` (the pixel domain).
    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|&v| (0.0..=1.0).contains(&v))
    }
}
