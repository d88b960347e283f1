//! Dense row-major tensors and the hand-written forward/backward ops the
//! two architectures need.

mod activation;
mod gradcheck;
mod linear;
mod norm;
mod params;
mod pool;

pub use activation::{
    relu, relu_backward, sigmoid, sigmoid_backward, softmax_backward, softmax_over_axis,
};
pub use gradcheck::{grad_check, GradCheckReport, TensorCheck};
pub use linear::{conv2d, conv2d_backward, dense, dense_backward, Conv2dGrads, DenseGrads};
pub use norm::{
    batchnorm_infer, batchnorm_infer_backward, batchnorm_train, batchnorm_train_backward,
    BatchNormGrads, BatchStats,
};
pub use params::{BatchNorm, LayerParams};
pub use pool::{
    pool_max, pool_max_backward, pool_max_over_axis, pool_max_over_axis_backward,
    pool_mean_over_axis, pool_mean_over_axis_backward,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense n-dimensional array with explicit shape. An empty shape is a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {n} values, buffer has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        assert!(!shape.contains(&0), "zero extent in {shape:?}");
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Self {
        let n = data.len();
        assert!(n > 0, "empty vector tensor");
        Self {
            shape: vec![n],
            data,
        }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Value at a multi-index.
    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| {
                assert!(i < n, "index {index:?} out of bounds for {:?}", self.shape);
                acc * n + i
            })
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_shape(other.shape(), "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn expect_shape(&self, shape: &[usize], what: &str) -> Result<()> {
        if self.shape != shape {
            return Err(Error::ShapeMismatch(format!(
                "{what}: expected {shape:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn expect_ndim(&self, n: usize, what: &str) -> Result<()> {
        if self.shape.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{what}: expected a {n}-d tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    /// Surfaces NaN/Inf as `NumericFault`.
    pub fn check_finite(self, op: &str) -> Result<Self> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::NumericFault(op.to_string()))
        }
    }

    /// Concatenate tensors of equal trailing shape along axis 0.
    pub fn concat(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::ShapeMismatch("concat of zero tensors".into()))?;
        let tail = &first.shape[1..];
        let mut lead = 0;
        let mut data = Vec::new();
        for p in parts {
            if p.shape.is_empty() || &p.shape[1..] != tail {
                return Err(Error::ShapeMismatch(format!(
                    "concat: {:?} incompatible with {:?}",
                    p.shape, first.shape
                )));
            }
            lead += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(tail);
        Ok(Self { shape, data })
    }

    /// Inverse of [`Tensor::concat`]: split along axis 0 into the given extents.
    pub fn split(&self, extents: &[usize]) -> Result<Vec<Self>> {
        if self.shape.is_empty() || extents.iter().sum::<usize>() != self.shape[0] {
            return Err(Error::ShapeMismatch(format!(
                "split {:?} into {extents:?}",
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        let mut start = 0;
        extents
            .iter()
            .map(|&e| {
                let mut shape = self.shape.clone();
                shape[0] = e;
                let t = Self::new(shape, self.data[start * inner..(start + e) * inner].to_vec());
                start += e;
                t
            })
            .collect()
    }

    /// Stack equal-shaped tensors along a new leading axis.
    pub fn stack(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::ShapeMismatch("stack of zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for p in parts {
            p.expect_shape(&first.shape, "stack")?;
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    /// Sub-tensor at index `i` of the leading axis.
    pub fn index_axis0(&self, i: usize) -> Self {
        let inner: usize = self.shape[1..].iter().product();
        let shape = if self.shape.len() == 1 {
            vec![]
        } else {
            self.shape[1..].to_vec()
        };
        Self {
            shape,
            data: self.data[i * inner..(i + 1) * inner].to_vec(),
        }
    }
}
