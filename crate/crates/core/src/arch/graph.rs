//! Forward composition of both families over a batch of patches, with the
//! caches needed by the hand-written backward pass.

use std::collections::BTreeMap;

use super::config::{Backend, Family, TIMBRAL_KERNEL_FRAMES};
use super::model::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    batchnorm_infer, batchnorm_infer_backward, batchnorm_train, batchnorm_train_backward,
    conv2d, conv2d_backward, dense, dense_backward, pool_max, pool_max_backward,
    pool_max_over_axis, pool_max_over_axis_backward, pool_mean_over_axis,
    pool_mean_over_axis_backward, relu, relu_backward, sigmoid, softmax_backward,
    softmax_over_axis, BatchStats, Tensor,
};

/// How batch-norm layers normalise during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Stored running statistics (inference).
    Running,
    /// Statistics of the current batch (training).
    Batch,
}

/// Named intermediate tensors of one forward pass, plus `"output"`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub features: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn get(&self, key: &str) -> Option<&Tensor<T>> {
        self.features.get(key)
    }

    /// Sigmoid tag activations, length `n_tags`.
    pub fn output(&self) -> &Tensor<T> {
        &self.features["output"]
    }

    pub fn keys(&self) -> Vec<&str> {
        self.features.keys().map(String::as_str).collect()
    }
}

/// Gradients aligned with `Model::params`.
#[derive(Debug, Clone)]
pub struct ModelGrads<T> {
    pub layers: Vec<LayerGrads<T>>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub name: String,
    pub weights: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
    pub gamma: Option<Tensor<T>>,
    pub beta: Option<Tensor<T>>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        let layers = model
            .params
            .iter()
            .map(|p| LayerGrads {
                name: p.name.clone(),
                weights: p.weights.as_ref().map(|w| Tensor::zeros(w.shape())),
                bias: p.bias.as_ref().map(|b| Tensor::zeros(b.shape())),
                gamma: p.bn.as_ref().map(|bn| Tensor::zeros(bn.gamma.shape())),
                beta: p.bn.as_ref().map(|bn| Tensor::zeros(bn.beta.shape())),
            })
            .collect();
        Self { layers }
    }

    /// Gradient tensors in `Model::trainable_mut` order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weights, &l.bias, &l.gamma, &l.beta])
            .filter_map(Option::as_ref)
            .collect()
    }

    /// `(tensor label, gradient)` pairs in trainable order.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for l in &self.layers {
            for (suffix, t) in [
                ("weights", &l.weights),
                ("bias", &l.bias),
                ("bn_gamma", &l.gamma),
                ("bn_beta", &l.beta),
            ] {
                if let Some(t) = t {
                    out.push((format!("{}.{suffix}", l.name), t));
                }
            }
        }
        out
    }
}

fn acc<T: Scalar>(slot: &mut Option<Tensor<T>>, g: &Tensor<T>) -> Result<()> {
    match slot {
        Some(t) => t.add_assign(g),
        None => Err(Error::ShapeMismatch("gradient for a missing tensor".into())),
    }
}

// ---------------------------------------------------------------------------
// layer units

struct BnCache<T> {
    layer: usize,
    inputs: Vec<Tensor<T>>,
    stats: Option<BatchStats<T>>,
}

struct Ctx<'a, T> {
    model: &'a Model<T>,
    mode: BnMode,
    eps: T,
    stats: Vec<(String, BatchStats<T>)>,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    fn bn_forward(&mut self, name: &str, inputs: Vec<Tensor<T>>) -> Result<(Vec<Tensor<T>>, BnCache<T>)> {
        let layer = self.model.layer_index(name)?;
        let bn = self.model.bn(name)?;
        match self.mode {
            BnMode::Running => {
                let out = inputs
                    .iter()
                    .map(|x| batchnorm_infer(x, bn, self.eps))
                    .collect::<Result<_>>()?;
                Ok((out, BnCache { layer, inputs, stats: None }))
            }
            BnMode::Batch => {
                let (out, stats) = batchnorm_train(&inputs, bn, self.eps)?;
                self.stats.push((name.to_string(), stats.clone()));
                Ok((out, BnCache { layer, inputs, stats: Some(stats) }))
            }
        }
    }

    /// conv (no bias) → batch-norm → relu.
    fn conv_unit(
        &mut self,
        name: &str,
        inputs: Vec<Tensor<T>>,
        pad: (usize, usize),
    ) -> Result<(Vec<Tensor<T>>, ConvUnit<T>)> {
        let w = self.model.weights(name)?;
        let conv = inputs
            .iter()
            .map(|x| conv2d(x, w, None, pad))
            .collect::<Result<Vec<_>>>()?;
        let (pre, bn) = self.bn_forward(name, conv)?;
        let acts = pre.iter().map(relu).collect::<Result<Vec<_>>>()?;
        Ok((
            acts,
            ConvUnit {
                layer: self.model.layer_index(name)?,
                pad,
                inputs,
                bn,
                pre,
            },
        ))
    }
}

struct ConvUnit<T> {
    layer: usize,
    pad: (usize, usize),
    inputs: Vec<Tensor<T>>,
    bn: BnCache<T>,
    pre: Vec<Tensor<T>>,
}

struct Back<'a, T> {
    model: &'a Model<T>,
    eps: T,
    grads: ModelGrads<T>,
}

impl<'a, T: Scalar> Back<'a, T> {
    fn bn_backward(&mut self, cache: &BnCache<T>, grad_out: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        let bn = self.model.params[cache.layer]
            .bn
            .as_ref()
            .ok_or_else(|| Error::ShapeMismatch("batch-norm cache on plain layer".into()))?;
        let g = match &cache.stats {
            None => batchnorm_infer_backward(&cache.inputs, bn, self.eps, grad_out)?,
            Some(stats) => batchnorm_train_backward(&cache.inputs, bn, stats, self.eps, grad_out)?,
        };
        let slot = &mut self.grads.layers[cache.layer];
        acc(&mut slot.gamma, &g.gamma)?;
        acc(&mut slot.beta, &g.beta)?;
        Ok(g.inputs)
    }

    fn conv_unit(&mut self, unit: &ConvUnit<T>, grad_acts: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        let g_pre = unit
            .pre
            .iter()
            .zip(grad_acts)
            .map(|(p, g)| relu_backward(p, g))
            .collect::<Result<Vec<_>>>()?;
        let g_conv = self.bn_backward(&unit.bn, &g_pre)?;
        let w = self.model.params[unit.layer]
            .weights
            .as_ref()
            .ok_or_else(|| Error::ShapeMismatch("conv layer without weights".into()))?;
        let mut out = Vec::with_capacity(g_conv.len());
        for (x, g) in unit.inputs.iter().zip(&g_conv) {
            let cg = conv2d_backward(x, w, false, unit.pad, g)?;
            acc(&mut self.grads.layers[unit.layer].weights, &cg.weights)?;
            out.push(cg.input);
        }
        Ok(out)
    }

    fn dense(
        &mut self,
        layer: usize,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let p = &self.model.params[layer];
        let w = p
            .weights
            .as_ref()
            .ok_or_else(|| Error::ShapeMismatch("dense layer without weights".into()))?;
        let g = dense_backward(input, w, p.bias.is_some(), grad_out)?;
        let slot = &mut self.grads.layers[layer];
        acc(&mut slot.weights, &g.weights)?;
        if let Some(gb) = &g.bias {
            acc(&mut slot.bias, gb)?;
        }
        Ok(g.input)
    }
}

/// `[C, T]` map viewed as a `[C, T, 1]` image for time-only convolutions.
fn as_column_image<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    x.clone().reshape(&[s[0], s[1], 1])
}

// ---------------------------------------------------------------------------
// musicnn

struct FrontTape<T> {
    input_bn: BnCache<T>,
    timbral: Vec<(ConvUnit<T>, Vec<usize>, Vec<usize>)>, // unit, act shape, argmax per example
    temporal: Vec<ConvUnit<T>>,
    normalized_shape: Vec<usize>,
}

/// Per-example front-end maps.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontendOutput<T> {
    pub timbral: Tensor<T>,
    pub temporal: Tensor<T>,
    pub concat: Tensor<T>,
}

fn check_patch<T: Scalar>(model: &Model<T>, x: &Tensor<T>) -> Result<()> {
    let d = &model.config.dsp;
    x.expect_shape(&[1, d.patch_frames, d.n_mels], "input patch")
}

fn frontend_fwd<T: Scalar>(
    ctx: &mut Ctx<'_, T>,
    x: Vec<Tensor<T>>,
) -> Result<(Vec<FrontendOutput<T>>, FrontTape<T>)> {
    let cfg = &ctx.model.config;
    for p in &x {
        check_patch(ctx.model, p)?;
    }
    let n = x.len();
    let t = cfg.dsp.patch_frames;
    let (xb, input_bn) = ctx.bn_forward("input_bn", x)?;
    let normalized_shape = xb[0].shape().to_vec();

    let mut timbral_parts: Vec<Vec<Tensor<T>>> = vec![Vec::new(); n];
    let mut timbral = Vec::new();
    for i in 0..cfg.timbral_filter_heights.len() {
        let (acts, unit) = ctx.conv_unit(
            &format!("timbral_{i}"),
            xb.clone(),
            ((TIMBRAL_KERNEL_FRAMES - 1) / 2, 0),
        )?;
        let act_shape = acts[0].shape().to_vec();
        let mut argmaxes = Vec::with_capacity(n);
        for (b, a) in acts.iter().enumerate() {
            let (m, arg) = pool_max_over_axis(a, 2)?;
            timbral_parts[b].push(m);
            argmaxes.push(arg);
        }
        timbral.push((unit, act_shape, argmaxes.concat()));
    }

    let env = xb
        .iter()
        .map(|v| pool_mean_over_axis(v, 2)?.reshape(&[1, t, 1]))
        .collect::<Result<Vec<_>>>()?;
    let mut temporal_parts: Vec<Vec<Tensor<T>>> = vec![Vec::new(); n];
    let mut temporal = Vec::new();
    for (j, &len) in cfg.temporal_filter_lengths.iter().enumerate() {
        let (acts, unit) = ctx.conv_unit(&format!("temporal_{j}"), env.clone(), ((len - 1) / 2, 0))?;
        for (b, a) in acts.into_iter().enumerate() {
            let c = a.shape()[0];
            temporal_parts[b].push(a.reshape(&[c, t])?);
        }
        temporal.push(unit);
    }

    let outputs = timbral_parts
        .into_iter()
        .zip(temporal_parts)
        .map(|(tim, tem)| {
            let timbral = cat_or_empty(&tim)?;
            let temporal = cat_or_empty(&tem)?;
            let parts: Vec<&Tensor<T>> = tim.iter().chain(tem.iter()).collect();
            Ok(FrontendOutput {
                timbral,
                temporal,
                concat: Tensor::concat(&parts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        outputs,
        FrontTape {
            input_bn,
            timbral,
            temporal,
            normalized_shape,
        },
    ))
}

/// Concatenation along channels; a path with no filters yields a 1×T zero map.
fn cat_or_empty<T: Scalar>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    if parts.is_empty() {
        return Err(Error::ShapeMismatch("empty front-end path".into()));
    }
    Tensor::concat(&parts.iter().collect::<Vec<_>>())
}

fn frontend_bwd<T: Scalar>(
    back: &mut Back<'_, T>,
    tape: &FrontTape<T>,
    g_front: &[Tensor<T>],
) -> Result<()> {
    let cfg = &back.model.config;
    let t = cfg.dsp.patch_frames;
    let mut extents = vec![cfg.timbral_channels; cfg.timbral_filter_heights.len()];
    extents.extend(vec![cfg.temporal_channels; cfg.temporal_filter_lengths.len()]);
    let split = g_front
        .iter()
        .map(|g| g.split(&extents))
        .collect::<Result<Vec<_>>>()?;

    let mut g_xb: Vec<Tensor<T>> = vec![Tensor::zeros(&tape.normalized_shape); g_front.len()];
    for (i, (unit, act_shape, argmax)) in tape.timbral.iter().enumerate() {
        let per = argmax.len() / g_front.len();
        let g_acts = split
            .iter()
            .enumerate()
            .map(|(b, parts)| {
                pool_max_over_axis_backward(act_shape, &argmax[b * per..(b + 1) * per], &parts[i])
            })
            .collect::<Result<Vec<_>>>()?;
        for (acc_b, g) in g_xb.iter_mut().zip(back.conv_unit(unit, &g_acts)?) {
            acc_b.add_assign(&g)?;
        }
    }
    let n_tim = tape.timbral.len();
    for (j, unit) in tape.temporal.iter().enumerate() {
        let g_acts = split
            .iter()
            .map(|parts| {
                let c = parts[n_tim + j].shape()[0];
                parts[n_tim + j].clone().reshape(&[c, t, 1])
            })
            .collect::<Result<Vec<_>>>()?;
        for (acc_b, g_env) in g_xb.iter_mut().zip(back.conv_unit(unit, &g_acts)?) {
            let g = pool_mean_over_axis_backward(&tape.normalized_shape, 2, &g_env.reshape(&[1, t])?)?;
            acc_b.add_assign(&g)?;
        }
    }
    back.bn_backward(&tape.input_bn, &g_xb)?;
    Ok(())
}

struct MidTape<T> {
    units: [ConvUnit<T>; 3],
}

/// `(cnn1, cnn2, cnn3)` per example, each `[C_mid, T]`.
type MidOutput<T> = (Tensor<T>, Tensor<T>, Tensor<T>);

fn midend_fwd<T: Scalar>(
    ctx: &mut Ctx<'_, T>,
    front: Vec<Tensor<T>>,
) -> Result<(Vec<MidOutput<T>>, MidTape<T>)> {
    let cfg = &ctx.model.config;
    let pad = ((cfg.midend_kernel - 1) / 2, 0);
    let c = cfg.midend_channels;
    let t = cfg.dsp.patch_frames;
    let img = front.iter().map(as_column_image).collect::<Result<Vec<_>>>()?;
    let (c1, u1) = ctx.conv_unit("cnn1", img, pad)?;
    let (a2, u2) = ctx.conv_unit("cnn2", c1.clone(), pad)?;
    let c2 = a2
        .iter()
        .zip(&c1)
        .map(|(a, r)| a.add(r))
        .collect::<Result<Vec<_>>>()?;
    let (a3, u3) = ctx.conv_unit("cnn3", c2.clone(), pad)?;
    let c3 = a3
        .iter()
        .zip(&c2)
        .map(|(a, r)| a.add(r))
        .collect::<Result<Vec<_>>>()?;
    let out = c1
        .into_iter()
        .zip(c2)
        .zip(c3)
        .map(|((a, b), d)| Ok((a.reshape(&[c, t])?, b.reshape(&[c, t])?, d.reshape(&[c, t])?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, MidTape { units: [u1, u2, u3] }))
}

/// Returns the gradient with respect to the front-end concat.
fn midend_bwd<T: Scalar>(
    back: &mut Back<'_, T>,
    tape: &MidTape<T>,
    g_cnn: [Vec<Tensor<T>>; 3],
) -> Result<Vec<Tensor<T>>> {
    let [g1, g2, g3] = g_cnn;
    let col = |v: Vec<Tensor<T>>| v.iter().map(as_column_image).collect::<Result<Vec<_>>>();
    let (mut g1, mut g2, g3) = (col(g1)?, col(g2)?, col(g3)?);
    // cnn3 = a3 + cnn2
    for (g, gi) in g2.iter_mut().zip(back.conv_unit(&tape.units[2], &g3)?) {
        g.add_assign(&gi)?;
    }
    for (g, r) in g2.iter_mut().zip(&g3) {
        g.add_assign(r)?;
    }
    // cnn2 = a2 + cnn1
    for (g, gi) in g1.iter_mut().zip(back.conv_unit(&tape.units[1], &g2)?) {
        g.add_assign(&gi)?;
    }
    for (g, r) in g1.iter_mut().zip(&g2) {
        g.add_assign(r)?;
    }
    let g_front = back.conv_unit(&tape.units[0], &g1)?;
    g_front
        .into_iter()
        .map(|g| {
            let s = g.shape().to_vec();
            g.reshape(&[s[0], s[1]])
        })
        .collect()
}

/// Head outputs shared by both back-ends.
struct HeadTape<T> {
    pen_layer: usize,
    out_layer: usize,
    pen_inputs: Vec<Tensor<T>>,
    pen_bn: BnCache<T>,
    pen_pre: Vec<Tensor<T>>,
    penultimate: Vec<Tensor<T>>,
}

fn head_fwd<T: Scalar>(
    ctx: &mut Ctx<'_, T>,
    summary: Vec<Tensor<T>>,
) -> Result<(Vec<(Tensor<T>, Tensor<T>, Tensor<T>)>, HeadTape<T>)> {
    let w_pen = ctx.model.weights("penultimate")?;
    let lin = summary
        .iter()
        .map(|s| dense(s, w_pen, None))
        .collect::<Result<Vec<_>>>()?;
    let (pre, pen_bn) = ctx.bn_forward("penultimate", lin)?;
    let pen = pre.iter().map(relu).collect::<Result<Vec<_>>>()?;
    let out_layer = ctx.model.layer("output")?;
    let w_out = ctx.model.weights("output")?;
    let outputs = pen
        .iter()
        .map(|p| {
            let logits = dense(p, w_out, out_layer.bias.as_ref())?;
            let out = sigmoid(&logits)?;
            Ok((p.clone(), logits, out))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        outputs,
        HeadTape {
            pen_layer: ctx.model.layer_index("penultimate")?,
            out_layer: ctx.model.layer_index("output")?,
            pen_inputs: summary,
            pen_bn,
            pen_pre: pre,
            penultimate: pen,
        },
    ))
}

fn head_bwd<T: Scalar>(
    back: &mut Back<'_, T>,
    tape: &HeadTape<T>,
    grad_logits: &[Tensor<T>],
) -> Result<Vec<Tensor<T>>> {
    let mut g_pre = Vec::with_capacity(grad_logits.len());
    for ((pen, pre), gl) in tape.penultimate.iter().zip(&tape.pen_pre).zip(grad_logits) {
        let g_pen = back.dense(tape.out_layer, pen, gl)?;
        g_pre.push(relu_backward(pre, &g_pen)?);
    }
    let g_lin = back.bn_backward(&tape.pen_bn, &g_pre)?;
    tape.pen_inputs
        .iter()
        .zip(&g_lin)
        .map(|(s, g)| back.dense(tape.pen_layer, s, g))
        .collect()
}

/// Temporal-pooling head outputs for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingOutput<T> {
    pub mean_pool: Tensor<T>,
    pub max_pool: Tensor<T>,
    pub penultimate: Tensor<T>,
    /// Pre-sigmoid scores.
    pub logits: Tensor<T>,
    pub output: Tensor<T>,
}

/// Attention head outputs for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput<T> {
    pub attention_weights: Tensor<T>,
    pub context: Tensor<T>,
    pub penultimate: Tensor<T>,
    /// Pre-sigmoid scores.
    pub logits: Tensor<T>,
    pub output: Tensor<T>,
}

enum BackTape<T> {
    Pooling {
        stack_shape: Vec<usize>,
        argmax: Vec<Vec<usize>>,
        head: HeadTape<T>,
    },
    Attention {
        stacks: Vec<Tensor<T>>,
        weights: Vec<Tensor<T>>,
        head: HeadTape<T>,
    },
}

fn check_stack<T: Scalar>(model: &Model<T>, s: &Tensor<T>) -> Result<()> {
    let cfg = &model.config;
    s.expect_shape(&[cfg.stack_channels(), cfg.dsp.patch_frames], "back-end stack")
}

fn pooling_fwd<T: Scalar>(
    ctx: &mut Ctx<'_, T>,
    stacks: Vec<Tensor<T>>,
) -> Result<(Vec<PoolingOutput<T>>, BackTape<T>)> {
    let mut means = Vec::new();
    let mut maxes = Vec::new();
    let mut argmax = Vec::new();
    let mut summary = Vec::new();
    for s in &stacks {
        check_stack(ctx.model, s)?;
        let mean = pool_mean_over_axis(s, 1)?;
        let (max, arg) = pool_max_over_axis(s, 1)?;
        summary.push(Tensor::concat(&[&mean, &max])?);
        means.push(mean);
        maxes.push(max);
        argmax.push(arg);
    }
    let (heads, head) = head_fwd(ctx, summary)?;
    let outputs = means
        .into_iter()
        .zip(maxes)
        .zip(heads)
        .map(|((mean_pool, max_pool), (penultimate, logits, output))| PoolingOutput {
            mean_pool,
            max_pool,
            penultimate,
            logits,
            output,
        })
        .collect();
    Ok((
        outputs,
        BackTape::Pooling {
            stack_shape: stacks[0].shape().to_vec(),
            argmax,
            head,
        },
    ))
}

fn attention_fwd<T: Scalar>(
    ctx: &mut Ctx<'_, T>,
    stacks: Vec<Tensor<T>>,
) -> Result<(Vec<AttentionOutput<T>>, BackTape<T>)> {
    let w_att = ctx.model.weights("attention")?;
    let mut weights = Vec::new();
    let mut contexts = Vec::new();
    for s in &stacks {
        check_stack(ctx.model, s)?;
        let (c, t) = (s.shape()[0], s.shape()[1]);
        let scores = (0..t)
            .map(|ti| {
                let column = Tensor::from_vec((0..c).map(|ci| s.data()[ci * t + ti]).collect());
                Ok(dense(&column, w_att, None)?.data()[0])
            })
            .collect::<Result<Vec<_>>>()?;
        let a = softmax_over_axis(&Tensor::from_vec(scores), 0)?;
        let context = (0..c)
            .map(|ci| {
                let row = &s.data()[ci * t..(ci + 1) * t];
                row.iter().zip(a.data()).fold(T::zero(), |acc, (&v, &w)| acc + v * w)
            })
            .collect();
        weights.push(a);
        contexts.push(Tensor::from_vec(context));
    }
    let (heads, head) = head_fwd(ctx, contexts.clone())?;
    let outputs = weights
        .iter()
        .cloned()
        .zip(contexts)
        .zip(heads)
        .map(|((attention_weights, context), (penultimate, logits, output))| AttentionOutput {
            attention_weights,
            context,
            penultimate,
            logits,
            output,
        })
        .collect();
    Ok((
        outputs,
        BackTape::Attention {
            stacks,
            weights,
            head,
        },
    ))
}

fn backend_bwd<T: Scalar>(
    back: &mut Back<'_, T>,
    tape: &BackTape<T>,
    grad_logits: &[Tensor<T>],
) -> Result<Vec<Tensor<T>>> {
    match tape {
        BackTape::Pooling {
            stack_shape,
            argmax,
            head,
        } => {
            let g_summary = head_bwd(back, head, grad_logits)?;
            let c = stack_shape[0];
            g_summary
                .iter()
                .zip(argmax)
                .map(|(g, arg)| {
                    let parts = g.split(&[c, c])?;
                    let mut gs = pool_mean_over_axis_backward(stack_shape, 1, &parts[0])?;
                    gs.add_assign(&pool_max_over_axis_backward(stack_shape, arg, &parts[1])?)?;
                    Ok(gs)
                })
                .collect()
        }
        BackTape::Attention {
            stacks,
            weights,
            head,
        } => {
            let g_context = head_bwd(back, head, grad_logits)?;
            let layer = back.model.layer_index("attention")?;
            let mut out = Vec::with_capacity(stacks.len());
            for ((s, a), gc) in stacks.iter().zip(weights).zip(&g_context) {
                let (c, t) = (s.shape()[0], s.shape()[1]);
                let mut gs = Tensor::zeros(s.shape());
                let mut g_a = vec![T::zero(); t];
                for ci in 0..c {
                    let g = gc.data()[ci];
                    for ti in 0..t {
                        g_a[ti] = g_a[ti] + g * s.data()[ci * t + ti];
                        gs.data_mut()[ci * t + ti] = a.data()[ti] * g;
                    }
                }
                let g_scores = softmax_backward(a, &Tensor::from_vec(g_a), 0)?;
                for ti in 0..t {
                    let column =
                        Tensor::from_vec((0..c).map(|ci| s.data()[ci * t + ti]).collect());
                    let g_col =
                        back.dense(layer, &column, &Tensor::from_vec(vec![g_scores.data()[ti]]))?;
                    for ci in 0..c {
                        let d = gs.data_mut();
                        d[ci * t + ti] = d[ci * t + ti] + g_col.data()[ci];
                    }
                }
                out.push(gs);
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------
// vgg

struct VggTape<T> {
    units: Vec<(ConvUnit<T>, Vec<usize>, Vec<Vec<usize>>)>, // unit, act shape, argmax per example
    flat: Vec<Tensor<T>>,
    out_layer: usize,
}

fn pad_frames<T: Scalar>(x: &Tensor<T>, extra: usize) -> Result<Tensor<T>> {
    let (c, t, m) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut data = Vec::with_capacity(c * (t + extra) * m);
    for ch in 0..c {
        data.extend_from_slice(&x.data()[ch * t * m..(ch + 1) * t * m]);
        data.extend(std::iter::repeat_n(T::zero(), extra * m));
    }
    Tensor::new(vec![c, t + extra, m], data)
}

fn vgg_fwd<T: Scalar>(
    ctx: &mut Ctx<'_, T>,
    x: Vec<Tensor<T>>,
) -> Result<(Vec<ForwardTrace<T>>, Vec<Tensor<T>>, VggTape<T>)> {
    let cfg = &ctx.model.config;
    for p in &x {
        check_patch(ctx.model, p)?;
    }
    let n = x.len();
    let mut h = x
        .iter()
        .map(|p| pad_frames(p, cfg.vgg_pad_frames))
        .collect::<Result<Vec<_>>>()?;
    let mut traces: Vec<BTreeMap<String, Tensor<T>>> = vec![BTreeMap::new(); n];
    let mut units = Vec::new();
    for (i, &(ph, pw)) in cfg.vgg_pool_shapes.iter().enumerate() {
        let (acts, unit) = ctx.conv_unit(&format!("block{}", i + 1), h, (1, 1))?;
        let act_shape = acts[0].shape().to_vec();
        let mut argmaxes = Vec::with_capacity(n);
        h = Vec::with_capacity(n);
        for (b, a) in acts.iter().enumerate() {
            let (p, arg) = pool_max(a, ph, pw)?;
            traces[b].insert(format!("pool{}", i + 1), p.clone());
            h.push(p);
            argmaxes.push(arg);
        }
        units.push((unit, act_shape, argmaxes));
    }
    let flat = h
        .into_iter()
        .map(|p| {
            let len = p.len();
            p.reshape(&[len])
        })
        .collect::<Result<Vec<_>>>()?;
    let out = ctx.model.layer("output")?;
    let w = ctx.model.weights("output")?;
    let mut logits = Vec::with_capacity(n);
    for (tr, f) in traces.iter_mut().zip(&flat) {
        let z = dense(f, w, out.bias.as_ref())?;
        tr.insert("output".into(), sigmoid(&z)?);
        logits.push(z);
    }
    Ok((
        traces
            .into_iter()
            .map(|features| ForwardTrace { features })
            .collect(),
        logits,
        VggTape {
            units,
            flat,
            out_layer: ctx.model.layer_index("output")?,
        },
    ))
}

fn vgg_bwd<T: Scalar>(
    back: &mut Back<'_, T>,
    tape: &VggTape<T>,
    grad_logits: &[Tensor<T>],
) -> Result<()> {
    let mut g = tape
        .flat
        .iter()
        .zip(grad_logits)
        .map(|(f, gl)| back.dense(tape.out_layer, f, gl))
        .collect::<Result<Vec<_>>>()?;
    for (unit, act_shape, argmaxes) in tape.units.iter().rev() {
        let g_acts = g
            .iter()
            .zip(argmaxes)
            .map(|(gp, arg)| pool_max_backward(act_shape, arg, gp))
            .collect::<Result<Vec<_>>>()?;
        g = back.conv_unit(unit, &g_acts)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// public entry points

enum TapeKind<T> {
    Musicnn {
        front: FrontTape<T>,
        mid: MidTape<T>,
        back: BackTape<T>,
        extents: [usize; 4],
    },
    Vgg(VggTape<T>),
}

/// Everything the backward pass needs from one batched forward pass.
pub struct Tape<T> {
    kind: TapeKind<T>,
    batch: usize,
    /// Pre-sigmoid output scores, one `[n_tags]` tensor per example.
    pub logits: Vec<Tensor<T>>,
    /// Batch statistics of every batch-norm layer (empty in running mode).
    pub batch_stats: Vec<(String, BatchStats<T>)>,
}

impl<T> Tape<T> {
    pub fn batch_size(&self) -> usize {
        self.batch
    }
}

/// Forward pass over a batch. In `BnMode::Batch` the batch-norm layers use
/// (and report) the statistics of this batch.
pub fn forward_batch<T: Scalar>(
    patches: &[Tensor<T>],
    model: &Model<T>,
    mode: BnMode,
) -> Result<(Vec<ForwardTrace<T>>, Tape<T>)> {
    if patches.is_empty() {
        return Err(Error::ShapeMismatch("forward over an empty batch".into()));
    }
    let mut ctx = Ctx {
        model,
        mode,
        eps: model.epsilon(),
        stats: Vec::new(),
    };
    let (traces, logits, kind) = match model.config.family {
        Family::Vgg => {
            let (traces, logits, tape) = vgg_fwd(&mut ctx, patches.to_vec())?;
            (traces, logits, TapeKind::Vgg(tape))
        }
        Family::Musicnn => {
            let (fronts, front) = frontend_fwd(&mut ctx, patches.to_vec())?;
            let concat: Vec<_> = fronts.iter().map(|f| f.concat.clone()).collect();
            let (mids, mid) = midend_fwd(&mut ctx, concat.clone())?;
            let stacks = concat
                .iter()
                .zip(&mids)
                .map(|(f, (a, b, c))| Tensor::concat(&[f, a, b, c]))
                .collect::<Result<Vec<_>>>()?;
            let cfg = &model.config;
            let m = cfg.midend_channels;
            let extents = [cfg.frontend_channels(), m, m, m];
            let mut traces: Vec<BTreeMap<String, Tensor<T>>> = fronts
                .into_iter()
                .zip(mids)
                .map(|(f, (c1, c2, c3))| {
                    BTreeMap::from([
                        ("timbral".to_string(), f.timbral),
                        ("temporal".to_string(), f.temporal),
                        ("cnn1".to_string(), c1),
                        ("cnn2".to_string(), c2),
                        ("cnn3".to_string(), c3),
                    ])
                })
                .collect();
            let mut logits = Vec::with_capacity(patches.len());
            let back = match cfg.backend {
                Backend::TemporalPooling => {
                    let (outs, tape) = pooling_fwd(&mut ctx, stacks)?;
                    for (tr, o) in traces.iter_mut().zip(outs) {
                        tr.insert("mean_pool".into(), o.mean_pool);
                        tr.insert("max_pool".into(), o.max_pool);
                        logits.push(o.logits);
                        tr.insert("penultimate".into(), o.penultimate);
                        tr.insert("output".into(), o.output);
                    }
                    tape
                }
                Backend::Attention => {
                    let (outs, tape) = attention_fwd(&mut ctx, stacks)?;
                    for (tr, o) in traces.iter_mut().zip(outs) {
                        tr.insert("attention_weights".into(), o.attention_weights);
                        tr.insert("context".into(), o.context);
                        logits.push(o.logits);
                        tr.insert("penultimate".into(), o.penultimate);
                        tr.insert("output".into(), o.output);
                    }
                    tape
                }
            };
            (
                traces
                    .into_iter()
                    .map(|features| ForwardTrace { features })
                    .collect(),
                logits,
                TapeKind::Musicnn {
                    front,
                    mid,
                    back,
                    extents,
                },
            )
        }
    };
    Ok((
        traces,
        Tape {
            kind,
            batch: patches.len(),
            logits,
            batch_stats: ctx.stats,
        },
    ))
}

/// Gradients of `Σ_b ⟨grad_logits[b], logits[b]⟩` with respect to every
/// trainable tensor, where `logits` are the pre-sigmoid output scores.
pub fn backward<T: Scalar>(
    model: &Model<T>,
    tape: &Tape<T>,
    grad_logits: &[Tensor<T>],
) -> Result<ModelGrads<T>> {
    if grad_logits.len() != tape.batch {
        return Err(Error::ShapeMismatch(format!(
            "{} logit gradients for a batch of {}",
            grad_logits.len(),
            tape.batch
        )));
    }
    for g in grad_logits {
        g.expect_shape(&[model.config.n_tags], "logit gradient")?;
    }
    let mut back = Back {
        model,
        eps: model.epsilon(),
        grads: ModelGrads::zeros_like(model),
    };
    match &tape.kind {
        TapeKind::Vgg(v) => vgg_bwd(&mut back, v, grad_logits)?,
        TapeKind::Musicnn {
            front,
            mid,
            back: head,
            extents,
        } => {
            let g_stack = backend_bwd(&mut back, head, grad_logits)?;
            let mut g_front = Vec::new();
            let mut g_cnn: [Vec<Tensor<T>>; 3] = Default::default();
            for g in &g_stack {
                let mut parts = g.split(extents)?.into_iter();
                g_front.push(parts.next().expect("four parts"));
                for slot in g_cnn.iter_mut() {
                    slot.push(parts.next().expect("four parts"));
                }
            }
            let g_concat = midend_bwd(&mut back, mid, g_cnn)?;
            for (a, b) in g_front.iter_mut().zip(&g_concat) {
                a.add_assign(b)?;
            }
            frontend_bwd(&mut back, front, &g_front)?;
        }
    }
    Ok(back.grads)
}

/// Inference forward pass of one `[1, T, M]` patch.
pub fn forward<T: Scalar>(patch: &Tensor<T>, model: &Model<T>) -> Result<ForwardTrace<T>> {
    let (mut traces, _) = forward_batch(std::slice::from_ref(patch), model, BnMode::Running)?;
    Ok(traces.remove(0))
}

fn running_ctx<T: Scalar>(model: &Model<T>) -> Ctx<'_, T> {
    Ctx {
        model,
        mode: BnMode::Running,
        eps: model.epsilon(),
        stats: Vec::new(),
    }
}

fn expect_family<T: Scalar>(model: &Model<T>, family: Family) -> Result<()> {
    if model.config.family != family {
        return Err(Error::ShapeMismatch(format!(
            "operation needs a {} model, got {}",
            family.as_str(),
            model.config.family.as_str()
        )));
    }
    Ok(())
}

/// Timbral and temporal front-end maps of a musicnn model, each `[C, T]`.
pub fn musicnn_frontend<T: Scalar>(patch: &Tensor<T>, model: &Model<T>) -> Result<FrontendOutput<T>> {
    expect_family(model, Family::Musicnn)?;
    let (mut out, _) = frontend_fwd(&mut running_ctx(model), vec![patch.clone()])?;
    Ok(out.remove(0))
}

/// Residual mid-end `(cnn1, cnn2, cnn3)` applied to the front-end concat.
pub fn musicnn_midend<T: Scalar>(
    concat: &Tensor<T>,
    model: &Model<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    expect_family(model, Family::Musicnn)?;
    let cfg = &model.config;
    concat.expect_shape(
        &[cfg.frontend_channels(), cfg.dsp.patch_frames],
        "mid-end input",
    )?;
    let (mut out, _) = midend_fwd(&mut running_ctx(model), vec![concat.clone()])?;
    Ok(out.remove(0))
}

pub fn backend_pooling<T: Scalar>(stack: &Tensor<T>, model: &Model<T>) -> Result<PoolingOutput<T>> {
    expect_family(model, Family::Musicnn)?;
    if model.config.backend != Backend::TemporalPooling {
        return Err(Error::ShapeMismatch("model has an attention back-end".into()));
    }
    let (mut out, _) = pooling_fwd(&mut running_ctx(model), vec![stack.clone()])?;
    Ok(out.remove(0))
}

pub fn backend_attention<T: Scalar>(
    stack: &Tensor<T>,
    model: &Model<T>,
) -> Result<AttentionOutput<T>> {
    expect_family(model, Family::Musicnn)?;
    if model.config.backend != Backend::Attention {
        return Err(Error::ShapeMismatch("model has a temporal-pooling back-end".into()));
    }
    let (mut out, _) = attention_fwd(&mut running_ctx(model), vec![stack.clone()])?;
    Ok(out.remove(0))
}

pub fn vgg_forward<T: Scalar>(patch: &Tensor<T>, model: &Model<T>) -> Result<ForwardTrace<T>> {
    expect_family(model, Family::Vgg)?;
    let (mut out, _, _) = vgg_fwd(&mut running_ctx(model), vec![patch.clone()])?;
    Ok(out.remove(0))
}
