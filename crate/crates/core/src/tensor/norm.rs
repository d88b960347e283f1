//! Batch normalisation over axis 0 (channels). Every other axis, and the
//! batch axis in training mode, is reduced.

use super::{BatchNorm, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-channel mean and biased variance of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T> {
    pub inputs: Vec<Tensor<T>>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

fn channel_layout<T: Scalar>(input: &Tensor<T>, bn: &BatchNorm<T>) -> Result<(usize, usize)> {
    let c = bn.channels();
    if input.ndim() == 0 || input.shape()[0] != c {
        return Err(Error::ShapeMismatch(format!(
            "batchnorm: {c} channels, input shape {:?}",
            input.shape()
        )));
    }
    for t in [&bn.beta, &bn.mean, &bn.var] {
        t.expect_shape(&[c], "batchnorm parameter")?;
    }
    Ok((c, input.len() / c))
}

fn normalize<T: Scalar>(
    input: &Tensor<T>,
    bn: &BatchNorm<T>,
    mean: &[T],
    inv_std: &[T],
) -> Result<Tensor<T>> {
    let (c, s) = channel_layout(input, bn)?;
    let mut out = input.clone();
    for ch in 0..c {
        let (m, k, g, b) = (mean[ch], inv_std[ch], bn.gamma.data()[ch], bn.beta.data()[ch]);
        for v in &mut out.data_mut()[ch * s..(ch + 1) * s] {
            *v = (*v - m) * k * g + b;
        }
    }
    out.check_finite("batchnorm")
}

fn inv_std<T: Scalar>(var: &[T], eps: T) -> Vec<T> {
    var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect()
}

/// `(x − mean) / sqrt(var + eps) · gamma + beta` with the stored running statistics.
pub fn batchnorm_infer<T: Scalar>(input: &Tensor<T>, bn: &BatchNorm<T>, eps: T) -> Result<Tensor<T>> {
    normalize(input, bn, bn.mean.data(), &inv_std(bn.var.data(), eps))
}

pub fn batchnorm_infer_backward<T: Scalar>(
    inputs: &[Tensor<T>],
    bn: &BatchNorm<T>,
    eps: T,
    grad_outs: &[Tensor<T>],
) -> Result<BatchNormGrads<T>> {
    let c = bn.channels();
    let k = inv_std(bn.var.data(), eps);
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    let mut gin = Vec::with_capacity(inputs.len());
    for (x, go) in inputs.iter().zip(grad_outs) {
        let (_, s) = channel_layout(x, bn)?;
        go.expect_shape(x.shape(), "batchnorm grad_out")?;
        let mut gx = go.clone();
        for ch in 0..c {
            let scale = k[ch] * bn.gamma.data()[ch];
            let m = bn.mean.data()[ch];
            let xs = &x.data()[ch * s..(ch + 1) * s];
            for (g, &xv) in gx.data_mut()[ch * s..(ch + 1) * s].iter_mut().zip(xs) {
                gg[ch] = gg[ch] + *g * (xv - m) * k[ch];
                gb[ch] = gb[ch] + *g;
                *g = *g * scale;
            }
        }
        gin.push(gx);
    }
    Ok(BatchNormGrads {
        inputs: gin,
        gamma: Tensor::from_vec(gg),
        beta: Tensor::from_vec(gb),
    })
}

/// Normalise with the statistics of `batch` itself and report them.
pub fn batchnorm_train<T: Scalar>(
    batch: &[Tensor<T>],
    bn: &BatchNorm<T>,
    eps: T,
) -> Result<(Vec<Tensor<T>>, BatchStats<T>)> {
    let stats = batch_stats(batch, bn)?;
    let k = inv_std(stats.var.data(), eps);
    let out = batch
        .iter()
        .map(|x| normalize(x, bn, stats.mean.data(), &k))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, stats))
}

fn batch_stats<T: Scalar>(batch: &[Tensor<T>], bn: &BatchNorm<T>) -> Result<BatchStats<T>> {
    let first = batch
        .first()
        .ok_or_else(|| Error::ShapeMismatch("batchnorm over empty batch".into()))?;
    let (c, s) = channel_layout(first, bn)?;
    for x in batch {
        x.expect_shape(first.shape(), "batchnorm batch member")?;
    }
    let count = T::of((s * batch.len()) as f64);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut acc = T::zero();
        for x in batch {
            acc = acc + x.data()[ch * s..(ch + 1) * s].iter().copied().sum();
        }
        let m = acc / count;
        let mut sq = T::zero();
        for x in batch {
            for &v in &x.data()[ch * s..(ch + 1) * s] {
                sq = sq + (v - m) * (v - m);
            }
        }
        mean[ch] = m;
        var[ch] = sq / count;
    }
    Ok(BatchStats {
        mean: Tensor::from_vec(mean),
        var: Tensor::from_vec(var),
    })
}

/// Gradients of [`batchnorm_train`], including the paths through the batch
/// mean and variance.
pub fn batchnorm_train_backward<T: Scalar>(
    batch: &[Tensor<T>],
    bn: &BatchNorm<T>,
    stats: &BatchStats<T>,
    eps: T,
    grad_outs: &[Tensor<T>],
) -> Result<BatchNormGrads<T>> {
    if batch.len() != grad_outs.len() || batch.is_empty() {
        return Err(Error::ShapeMismatch(
            "batchnorm backward: batch and gradient counts differ".into(),
        ));
    }
    let (c, s) = channel_layout(&batch[0], bn)?;
    let count = T::of((s * batch.len()) as f64);
    let k = inv_std(stats.var.data(), eps);
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    let mut gin: Vec<Tensor<T>> = grad_outs.to_vec();
    for (x, go) in batch.iter().zip(grad_outs) {
        go.expect_shape(x.shape(), "batchnorm grad_out")?;
    }
    for ch in 0..c {
        let (m, inv, gamma) = (stats.mean.data()[ch], k[ch], bn.gamma.data()[ch]);
        // sums of dy and dy·x̂ over batch and spatial positions
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for (x, go) in batch.iter().zip(grad_outs) {
            let xs = &x.data()[ch * s..(ch + 1) * s];
            let gs = &go.data()[ch * s..(ch + 1) * s];
            for (&xv, &gv) in xs.iter().zip(gs) {
                sum_g = sum_g + gv;
                sum_gx = sum_gx + gv * (xv - m) * inv;
            }
        }
        gg[ch] = sum_gx;
        gb[ch] = sum_g;
        let scale = gamma * inv / count;
        for (x, gx) in batch.iter().zip(gin.iter_mut()) {
            let xs = &x.data()[ch * s..(ch + 1) * s];
            for (g, &xv) in gx.data_mut()[ch * s..(ch + 1) * s].iter_mut().zip(xs) {
                let xhat = (xv - m) * inv;
                *g = scale * (count * *g - sum_g - xhat * sum_gx);
            }
        }
    }
    Ok(BatchNormGrads {
        inputs: gin,
        gamma: Tensor::from_vec(gg),
        beta: Tensor::from_vec(gb),
    })
}
