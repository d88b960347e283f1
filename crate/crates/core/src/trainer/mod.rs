//! Supervised training with binary cross-entropy and Adam.

use std::path::Path;

use crate::arch::{backward, forward_batch, BnMode, Model, ModelGrads, Tape};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::{NumericMode, Scalar};
use crate::tensor::{grad_check, GradCheckReport, Tensor};

/// Momentum of the batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub numeric_mode: NumericMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 8,
            epochs: 10,
            seed: 0,
            numeric_mode: NumericMode::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

/// Mean binary cross-entropy over tags and its gradient with respect to the
/// pre-sigmoid scores, `(p − t) / n`.
pub fn bce_loss<T: Scalar>(predictions: &Tensor<T>, targets: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    targets.expect_shape(predictions.shape(), "bce targets")?;
    let n = T::of(predictions.len() as f64);
    let mut loss = T::zero();
    for (&p, &t) in predictions.data().iter().zip(targets.data()) {
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::NumericFault(format!("bce_loss: prediction {p} outside (0, 1)")));
        }
        loss = loss - (t * p.ln() + (T::one() - t) * (T::one() - p).ln());
    }
    let grad = Tensor::new(
        predictions.shape().to_vec(),
        predictions
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&p, &t)| (p - t) / n)
            .collect(),
    )?;
    Ok((loss / n, grad))
}

/// Mean binary cross-entropy computed from pre-sigmoid scores `z`, stable for
/// saturated predictions: `max(z, 0) − z·t + ln(1 + e^{−|z|})`. Same gradient as
/// [`bce_loss`].
pub fn bce_with_logits<T: Scalar>(logits: &Tensor<T>, targets: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    targets.expect_shape(logits.shape(), "bce targets")?;
    let n = T::of(logits.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.data().iter().zip(targets.data()) {
        loss = loss + z.max(T::zero()) - z * t + (-z.abs()).exp().ln_1p();
        let p = T::one() / (T::one() + (-z).exp());
        grad.push((p - t) / n);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NumericFault("bce_with_logits".into()));
    }
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Adam moments for a fixed list of tensors.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shapes: &[&[usize]]) -> Self {
        let zeros: Vec<_> = shapes.iter().map(|s| Tensor::zeros(s)).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut AdamState<T>,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let (b1, b2) = (T::of(config.beta1), T::of(config.beta2));
    let c1 = T::one() - T::of(config.beta1.powi(state.step as i32));
    let c2 = T::one() - T::of(config.beta2.powi(state.step as i32));
    let lr = T::of(config.learning_rate);
    let eps = T::of(config.adam_epsilon);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        g.expect_shape(p.shape(), "adam gradient")?;
        for (((x, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *x = *x - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Loss, gradients and tape of one batch. The loss is the mean over examples
/// of the per-example tag-mean cross-entropy.
pub fn batch_loss_and_grads<T: Scalar>(
    model: &Model<T>,
    patches: &[Tensor<T>],
    targets: &[Tensor<T>],
    mode: BnMode,
) -> Result<(T, ModelGrads<T>, Tape<T>)> {
    if patches.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} patches, {} targets",
            patches.len(),
            targets.len()
        )));
    }
    let (_, tape) = forward_batch(patches, model, mode)?;
    let b = T::of(patches.len() as f64);
    let mut loss = T::zero();
    let mut grad_logits = Vec::with_capacity(patches.len());
    for (z, t) in tape.logits.iter().zip(targets) {
        let (l, g) = bce_with_logits(z, t)?;
        loss = loss + l;
        grad_logits.push(g.scale(T::one() / b));
    }
    let grads = backward(model, &tape, &grad_logits)?;
    Ok((loss / b, grads, tape))
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub epoch_losses: Vec<f64>,
}

impl TrainingLog {
    /// `epoch,loss` CSV, one row per epoch (1-based).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in self.epoch_losses.iter().enumerate() {
            s.push_str(&format!("{},{l:.8}\n", i + 1));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Trains `model` in place. Batch-norm layers normalise with batch statistics
/// and update their running statistics by exponential moving average.
/// Examples within a batch are processed in ascending index order.
pub fn fit<T: Scalar>(
    model: &mut Model<T>,
    data: &[(Tensor<T>, Tensor<T>)],
    config: &TrainConfig,
) -> Result<TrainingLog> {
    fit_with(model, data, config, |_, _| {})
}

/// [`fit`] with a callback invoked after each epoch with `(epoch, loss)`.
pub fn fit_with<T: Scalar, F: FnMut(usize, f64)>(
    model: &mut Model<T>,
    data: &[(Tensor<T>, Tensor<T>)],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainingLog> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::ConfigInvalid("training set is empty".into()));
    }
    let shapes: Vec<Vec<usize>> = model.trainable().iter().map(|t| t.shape().to_vec()).collect();
    let shape_refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
    let mut state = AdamState::new(&shape_refs);
    let mut rng = SplitMix64::for_stream(config.seed, "shuffle");
    let momentum = T::of(BN_MOMENTUM);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut idx = chunk.to_vec();
            idx.sort_unstable();
            let patches: Vec<_> = idx.iter().map(|&i| data[i].0.clone()).collect();
            let targets: Vec<_> = idx.iter().map(|&i| data[i].1.clone()).collect();
            let (loss, grads, tape) = batch_loss_and_grads(model, &patches, &targets, BnMode::Batch)?;
            total += loss.as_f64() * idx.len() as f64;
            for (name, stats) in &tape.batch_stats {
                let bn = model
                    .layer_mut(name)?
                    .bn
                    .as_mut()
                    .ok_or_else(|| Error::ShapeMismatch(format!("{name} has no batch-norm")))?;
                ema(&mut bn.mean, &stats.mean, momentum);
                ema(&mut bn.var, &stats.var, momentum);
            }
            let g = grads.tensors();
            let mut params = model.trainable_mut();
            adam_step(&mut params, &g, &mut state, config)?;
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NumericFault(format!("training loss at epoch {}", epoch + 1)));
        }
        on_epoch(epoch + 1, mean);
        log.push(mean);
    }
    Ok(TrainingLog { epoch_losses: log })
}

fn ema<T: Scalar>(running: &mut Tensor<T>, batch: &Tensor<T>, momentum: T) {
    for (r, &b) in running.data_mut().iter_mut().zip(batch.data()) {
        *r = momentum * *r + (T::one() - momentum) * b;
    }
}

/// Mean BCE of the model over a dataset in inference mode.
pub fn evaluate_loss<T: Scalar>(model: &Model<T>, data: &[(Tensor<T>, Tensor<T>)]) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in data {
        let (_, tape) = forward_batch(std::slice::from_ref(x), model, BnMode::Running)?;
        total += bce_with_logits(&tape.logits[0], t)?.0.as_f64();
    }
    Ok(total / data.len().max(1) as f64)
}

/// Finite-difference check of every trainable tensor of a 64-bit model under
/// the batch BCE loss.
pub fn model_grad_check(
    model: &Model<f64>,
    patches: &[Tensor<f64>],
    targets: &[Tensor<f64>],
    mode: BnMode,
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let mut probe = model.clone();
    let inputs = model.trainable();
    grad_check(
        |values| {
            probe.set_trainable(values)?;
            let (loss, grads, _) = batch_loss_and_grads(&probe, patches, targets, mode)?;
            Ok((loss, grads.tensors().into_iter().cloned().collect()))
        },
        &inputs,
        eps,
        tolerance,
    )
}
