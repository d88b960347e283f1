use super::activation::axis_layout;
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Non-overlapping 2-D max pooling of `[C, H, W]` with windows that must
/// divide `H` and `W` exactly. Also returns, per output cell, the linear
/// input index of the first maximal element.
pub fn pool_max<T: Scalar>(
    t: &Tensor<T>,
    window_h: usize,
    window_w: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    t.expect_ndim(3, "pool_max input")?;
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    if window_h == 0 || window_w == 0 || h % window_h != 0 || w % window_w != 0 {
        return Err(Error::ShapeMismatch(format!(
            "pool_max: window {window_h}x{window_w} does not divide {h}x{w}"
        )));
    }
    let (oh, ow) = (h / window_h, w / window_w);
    let x = t.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = ch * h * w + oy * window_h * w + ox * window_w;
                for dy in 0..window_h {
                    for dx in 0..window_w {
                        let i = ch * h * w + (oy * window_h + dy) * w + ox * window_w + dx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, argmax))
}

/// Routes each output gradient to the recorded argmax input cell.
pub fn pool_max_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    scatter(input_shape, argmax, grad_out)
}

fn scatter<T: Scalar>(shape: &[usize], argmax: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::ShapeMismatch(format!(
            "max-pool backward: {} indices for {} gradients",
            argmax.len(),
            grad_out.len()
        )));
    }
    let mut g = Tensor::zeros(shape);
    for (&i, &gv) in argmax.iter().zip(grad_out.data()) {
        let d = g.data_mut();
        d[i] = d[i] + gv;
    }
    Ok(g)
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    s
}

/// Mean over `axis`; the axis is removed from the shape.
pub fn pool_mean_over_axis<T: Scalar>(t: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, n, inner) = axis_layout(t.shape(), axis)?;
    let x = t.data();
    let scale = T::one() / T::of(n as f64);
    let mut out = vec![T::zero(); outer * inner];
    for o in 0..outer {
        for k in 0..n {
            let src = &x[(o * n + k) * inner..(o * n + k + 1) * inner];
            for (d, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *d = *d + v;
            }
        }
    }
    for v in &mut out {
        *v = *v * scale;
    }
    Tensor::new(reduced_shape(t.shape(), axis), out)
}

pub fn pool_mean_over_axis_backward<T: Scalar>(
    input_shape: &[usize],
    axis: usize,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (outer, n, inner) = axis_layout(input_shape, axis)?;
    grad_out.expect_shape(&reduced_shape(input_shape, axis), "mean-pool grad_out")?;
    let scale = T::one() / T::of(n as f64);
    let g = grad_out.data();
    let mut out = Vec::with_capacity(outer * n * inner);
    for o in 0..outer {
        for _ in 0..n {
            out.extend(g[o * inner..(o + 1) * inner].iter().map(|&v| v * scale));
        }
    }
    Tensor::new(input_shape.to_vec(), out)
}

/// Max over `axis` with first-index tie-breaking; returns the linear input
/// index of each selected element.
pub fn pool_max_over_axis<T: Scalar>(t: &Tensor<T>, axis: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let (outer, n, inner) = axis_layout(t.shape(), axis)?;
    let x = t.data();
    let mut out = Vec::with_capacity(outer * inner);
    let mut argmax = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let mut best = o * n * inner + i;
            for k in 1..n {
                let idx = (o * n + k) * inner + i;
                if x[idx] > x[best] {
                    best = idx;
                }
            }
            out.push(x[best]);
            argmax.push(best);
        }
    }
    Ok((Tensor::new(reduced_shape(t.shape(), axis), out)?, argmax))
}

pub fn pool_max_over_axis_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    scatter(input_shape, argmax, grad_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_2x2() {
        let t = Tensor::<f64>::from_f64(&[1, 2, 2], &[1., 2., 3., 4.]).unwrap();
        let (y, idx) = pool_max(&t, 2, 2).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx, vec![3]);
    }

    #[test]
    fn max_requires_dividing_window() {
        let t = Tensor::<f64>::zeros(&[1, 3, 4]);
        assert!(pool_max(&t, 2, 2).is_err());
    }

    #[test]
    fn ties_route_to_first_index() {
        let t = Tensor::<f64>::from_f64(&[1, 2, 2], &[5., 5., 5., 5.]).unwrap();
        let (_, idx) = pool_max(&t, 2, 2).unwrap();
        let g = pool_max_backward(t.shape(), &idx, &Tensor::full(&[1, 1, 1], 1.0)).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
        let (_, idx) = pool_max_over_axis(&t, 2).unwrap();
        assert_eq!(idx, vec![0, 2]);
    }

    #[test]
    fn mean_of_constant_is_constant() {
        let t = Tensor::<f64>::full(&[3, 7, 2], 1.25);
        for axis in 0..3 {
            let m = pool_mean_over_axis(&t, axis).unwrap();
            assert!(m.data().iter().all(|&v| v == 1.25));
        }
    }

    #[test]
    fn axis_reductions_drop_axis() {
        let t = Tensor::<f64>::from_f64(&[2, 3], &[1., 5., 2., -1., -4., 0.]).unwrap();
        let (m, _) = pool_max_over_axis(&t, 1).unwrap();
        assert_eq!(m.shape(), &[2]);
        assert_eq!(m.data(), &[5., 0.]);
        let (m, _) = pool_max_over_axis(&t, 0).unwrap();
        assert_eq!(m.data(), &[1., 5., 2.]);
        let a = pool_mean_over_axis(&t, 0).unwrap();
        assert_eq!(a.data(), &[0., 0.5, 1.]);
    }
}
