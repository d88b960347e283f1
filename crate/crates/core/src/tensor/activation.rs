use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn relu<T: Scalar>(t: &Tensor<T>) -> Result<Tensor<T>> {
    t.map(|v| v.max(T::zero())).check_finite("relu")
}

/// Gradient through relu; the kink at 0 takes the zero branch.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.expect_shape(input.shape(), "relu grad_out")?;
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *gv = T::zero();
        }
    }
    Ok(g)
}

pub fn sigmoid<T: Scalar>(t: &Tensor<T>) -> Result<Tensor<T>> {
    t.map(|v| T::one() / (T::one() + (-v).exp()))
        .check_finite("sigmoid")
}

/// Gradient through sigmoid given its output `y`: `g · y · (1 − y)`.
pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.expect_shape(output.shape(), "sigmoid grad_out")?;
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        *gv = *gv * y * (T::one() - y);
    }
    Ok(g)
}

/// (outer, axis extent, inner) decomposition of a shape around `axis`.
pub(super) fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::ShapeMismatch(format!(
            "axis {axis} out of range for shape {shape:?}"
        )));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Softmax along `axis`, shifted by the per-lane maximum so large inputs
/// cannot overflow.
pub fn softmax_over_axis<T: Scalar>(t: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, n, inner) = axis_layout(t.shape(), axis)?;
    let x = t.data();
    let mut out = t.clone();
    let y = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let m = (0..n).map(|k| x[idx(k)]).fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for k in 0..n {
                let e = (x[idx(k)] - m).exp();
                y[idx(k)] = e;
                z = z + e;
            }
            for k in 0..n {
                y[idx(k)] = y[idx(k)] / z;
            }
        }
    }
    out.check_finite("softmax")
}

/// Gradient through softmax given its output `y`:
/// `dx_k = y_k · (g_k − Σ_j g_j y_j)` along each lane.
pub fn softmax_backward<T: Scalar>(
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
    axis: usize,
) -> Result<Tensor<T>> {
    grad_out.expect_shape(output.shape(), "softmax grad_out")?;
    let (outer, n, inner) = axis_layout(output.shape(), axis)?;
    let y = output.data();
    let g = grad_out.data();
    let mut dx = grad_out.clone();
    let d = dx.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let dot = (0..n).fold(T::zero(), |a, k| a + g[idx(k)] * y[idx(k)]);
            for k in 0..n {
                d[idx(k)] = y[idx(k)] * (g[idx(k)] - dot);
            }
        }
    }
    Ok(dx)
}
