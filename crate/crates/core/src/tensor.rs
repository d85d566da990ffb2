//! Dense row-major tensors over `f64`.
//!
//! Shapes are arbitrary-rank, but in practice everything here is a vector
//! `[n]`, a matrix `[rows, cols]` (time-major for sequences), or a conv
//! kernel stack `[c_out, c_in, k]`. Values are validated finite on
//! construction; the autodiff graph re-validates at its boundaries so NaN/Inf
//! never propagate silently.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {actual} does not match shape product {expected}")]
    ShapeData { expected: usize, actual: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("{op}: {axis} mismatch, expected {expected}, got {actual}")]
    Dim {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: invalid {name}: {why}")]
    Param {
        op: &'static str,
        name: &'static str,
        why: &'static str,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting shape/data disagreement and non-finite
    /// values.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self, TensorError> {
        let shape = shape.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeData {
                expected,
                actual: data.len(),
            });
        }
        let t = Tensor { shape, data };
        t.check_finite()?;
        Ok(t)
    }

    /// 1-D tensor of shape `[data.len()]`.
    pub fn vector(data: Vec<f64>) -> Result<Self, TensorError> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    /// 2-D tensor of shape `[rows, cols]`.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    /// Fills from a function of the flat (row-major) index. The values must
    /// be finite; this is enforced.
    pub fn from_fn(
        shape: impl Into<Vec<usize>>,
        mut f: impl FnMut(usize) -> f64,
    ) -> Result<Self, TensorError> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(&mut f).collect();
        Tensor::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the raw values. Callers that can introduce
    /// non-finite values (e.g. optimizer steps) must re-validate before the
    /// tensor crosses a graph boundary; `Graph::param`/`Graph::input` do so.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Row count of a 1-D or 2-D tensor (a vector is one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    /// Column count of a 1-D or 2-D tensor.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    /// Element of a 2-D (or vector-as-row) tensor.
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    /// Row slice of a 2-D (or vector-as-row) tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn check_finite(&self) -> Result<(), TensorError> {
        for (index, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(TensorError::NonFinite { index });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_validates_shape_product() {
        let err = Tensor::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert_eq!(err, TensorError::ShapeData { expected: 6, actual: 5 });
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn new_rejects_non_finite() {
        let err = Tensor::vector(vec![1.0, f64::NAN]).unwrap_err();
        assert_eq!(err, TensorError::NonFinite { index: 1 });
        let err = Tensor::vector(vec![f64::INFINITY]).unwrap_err();
        assert_eq!(err, TensorError::NonFinite { index: 0 });
    }

    #[test]
    fn row_major_indexing() {
        let t = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.rows(), 2);
        assert_eq!(t.cols(), 3);
        assert_eq!(t.at2(1, 0), 4.0);
        assert_eq!(t.row(0), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn vector_is_one_row() {
        let t = Tensor::vector(vec![7.0, 8.0]).unwrap();
        assert_eq!(t.rows(), 1);
        assert_eq!(t.cols(), 2);
        assert_eq!(t.row(0), &[7.0, 8.0]);
    }

    #[test]
    fn error_messages_name_the_problem() {
        // The Display impls are part of the CLI's machine-readable surface.
        let e = TensorError::Dim {
            op: "conv1d",
            axis: "in_channels",
            expected: 4,
            actual: 3,
        };
        assert_eq!(
            alloc::format!("{e}"),
            "conv1d: in_channels mismatch, expected 4, got 3"
        );
    }
}
