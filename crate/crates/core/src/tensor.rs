//! Dense f64 tensors with an optional gradient slot.
//!
//! Tensors are plain value types: a shape, a flat row-major buffer, and an
//! optional gradient of the same length. All differentiable computation goes
//! through [`crate::tape::Tape`]; the `grad` slot is where the tape's result
//! lands so optimizers can consume it.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected} data values for shape {shape:?}, got {got}")]
    DataLength {
        op: &'static str,
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("{op}: index {index} out of range for size {size}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        size: usize,
    },
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
    #[error("{op}: expected a 2-d tensor, got shape {shape:?}")]
    NotMatrix { op: &'static str, shape: Vec<usize> },
    #[error("{op}: gradient missing")]
    MissingGrad { op: &'static str },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
}

/// Dense multi-dimensional array of f64 with an optional gradient slot.
///
/// Invariants: `product(shape) == data.len()`, the gradient (when present)
/// has the same length as `data`, and every stored value is finite.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        let expected = numel(shape);
        if expected != data.len() {
            return Err(TensorError::DataLength {
                op: "from_vec",
                shape: shape.to_vec(),
                expected,
                got: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: "from_vec" });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel(shape)],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(&[1], vec![v]).expect("scalar is always well formed")
    }

    /// Uniform init in `[-scale, scale)`, the usual small-weight start.
    pub fn uniform<R: Rng>(shape: &[usize], scale: f64, rng: &mut R) -> Self {
        let data = (0..numel(shape))
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<(), TensorError> {
        if grad.len() != self.data.len() {
            return Err(TensorError::DataLength {
                op: "set_grad",
                shape: self.shape.clone(),
                expected: self.data.len(),
                got: grad.len(),
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Rows and columns of a 2-d tensor.
    pub fn dims2(&self) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::NotMatrix {
                op: "dims2",
                shape: self.shape.clone(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_length() {
        let err = Tensor::from_vec(&[2, 3], vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::DataLength { expected: 6, got: 5, .. }));
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        let err = Tensor::from_vec(&[2], vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, TensorError::NonFinite { .. }));
    }

    #[test]
    fn grad_slot_roundtrip() {
        let mut t = Tensor::zeros(&[3]).with_grad();
        assert!(t.grad().is_none());
        t.set_grad(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[1.0, 2.0, 3.0]);
        assert!(t.set_grad(vec![1.0]).is_err());
        t.clear_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn zero_sized_shapes_are_allowed() {
        // Empty sequences occur as concat neutral elements.
        let t = Tensor::from_vec(&[0], vec![]).unwrap();
        assert_eq!(t.len(), 0);
    }
}
