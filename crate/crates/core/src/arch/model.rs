use std::collections::HashMap;

use super::config::{Backend, Family, ModelConfig, TIMBRAL_KERNEL_FRAMES};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::{BatchNorm, LayerParams, Tensor};

/// Parameter initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Every weight and bias zero; batch-norm gamma/beta/mean zero, var one.
    Zeros,
    /// He-uniform fan-in scaling, one SplitMix64 stream per layer name.
    SeededRandom(u64),
}

/// Shape of one layer as implied by the config.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub weights: Option<Vec<usize>>,
    pub fan_in: usize,
    pub bias: Option<usize>,
    pub bn: Option<usize>,
    /// Weights start at zero even under seeded initialisation.
    pub zero_init: bool,
}

impl LayerSpec {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            weights: None,
            fan_in: 0,
            bias: None,
            bn: None,
            zero_init: false,
        }
    }

    fn weights(mut self, shape: Vec<usize>) -> Self {
        self.fan_in = shape[1..].iter().product();
        self.weights = Some(shape);
        self
    }

    fn bias(mut self, n: usize) -> Self {
        self.bias = Some(n);
        self
    }

    fn zero_init(mut self) -> Self {
        self.zero_init = true;
        self
    }

    fn bn(mut self, n: usize) -> Self {
        self.bn = Some(n);
        self
    }
}

/// Ordered layer layout for `cfg`. Convolutions and the penultimate dense
/// layer are followed by batch-norm and carry no bias.
pub fn layer_specs(cfg: &ModelConfig) -> Vec<LayerSpec> {
    let mut out = Vec::new();
    match cfg.family {
        Family::Musicnn => {
            out.push(LayerSpec::new("input_bn").bn(1));
            for (i, kw) in cfg.timbral_kernel_widths().into_iter().enumerate() {
                out.push(
                    LayerSpec::new(format!("timbral_{i}"))
                        .weights(vec![cfg.timbral_channels, 1, TIMBRAL_KERNEL_FRAMES, kw])
                        .bn(cfg.timbral_channels),
                );
            }
            for (i, &len) in cfg.temporal_filter_lengths.iter().enumerate() {
                out.push(
                    LayerSpec::new(format!("temporal_{i}"))
                        .weights(vec![cfg.temporal_channels, 1, len, 1])
                        .bn(cfg.temporal_channels),
                );
            }
            let mid = cfg.midend_channels;
            let mut c_in = cfg.frontend_channels();
            for name in ["cnn1", "cnn2", "cnn3"] {
                out.push(
                    LayerSpec::new(name)
                        .weights(vec![mid, c_in, cfg.midend_kernel, 1])
                        .bn(mid),
                );
                c_in = mid;
            }
            let stack = cfg.stack_channels();
            let pen_in = match cfg.backend {
                Backend::TemporalPooling => 2 * stack,
                Backend::Attention => {
                    // uniform attention at initialisation
                    out.push(LayerSpec::new("attention").weights(vec![1, stack]).zero_init());
                    stack
                }
            };
            out.push(
                LayerSpec::new("penultimate")
                    .weights(vec![cfg.penultimate_units, pen_in])
                    .bn(cfg.penultimate_units),
            );
            out.push(
                LayerSpec::new("output")
                    .weights(vec![cfg.n_tags, cfg.penultimate_units])
                    .bias(cfg.n_tags),
            );
        }
        Family::Vgg => {
            let mut c_in = 1;
            for (i, &c) in cfg.vgg_block_channels.iter().enumerate() {
                out.push(
                    LayerSpec::new(format!("block{}", i + 1))
                        .weights(vec![c, c_in, 3, 3])
                        .bn(c),
                );
                c_in = c;
            }
            let (h, w) = cfg.vgg_final_extent();
            out.push(
                LayerSpec::new("output")
                    .weights(vec![cfg.n_tags, c_in * h * w])
                    .bias(cfg.n_tags),
            );
        }
    }
    out
}

/// Architecture config, named parameters and the ordered tag vocabulary.
/// Output index `i` always means `tag_vocabulary[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    /// Registry or user-chosen name, stored in containers.
    pub name: String,
    pub config: ModelConfig,
    pub params: Vec<LayerParams<T>>,
    pub tag_vocabulary: Vec<String>,
    index: HashMap<String, usize>,
}

/// Placeholder vocabulary `tag0, tag1, ...`.
pub fn generic_vocabulary(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("tag{i}")).collect()
}

/// Allocates every layer of `config` with validated shapes.
pub fn build_model<T: Scalar>(
    config: &ModelConfig,
    init: Init,
    tag_vocabulary: Vec<String>,
) -> Result<Model<T>> {
    config.validate()?;
    let params = layer_specs(config)
        .into_iter()
        .map(|spec| init_layer(&spec, init))
        .collect();
    Model::from_parts(config.clone(), params, tag_vocabulary)
}

fn init_layer<T: Scalar>(spec: &LayerSpec, init: Init) -> LayerParams<T> {
    let weights = spec.weights.as_ref().map(|shape| match init {
        Init::Zeros => Tensor::zeros(shape),
        Init::SeededRandom(_) if spec.zero_init => Tensor::zeros(shape),
        Init::SeededRandom(seed) => {
            let mut rng = SplitMix64::for_stream(seed, &spec.name);
            let limit = (6.0 / spec.fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            // drawn at f32 precision so both numeric modes share identical values
            let data = (0..n)
                .map(|_| T::of(rng.uniform(-limit, limit) as f32 as f64))
                .collect();
            Tensor::new(shape.clone(), data).expect("shape product matches")
        }
    });
    let bn = spec.bn.map(|c| match init {
        Init::Zeros => BatchNorm {
            gamma: Tensor::zeros(&[c]),
            ..BatchNorm::identity(c)
        },
        Init::SeededRandom(_) => BatchNorm::identity(c),
    });
    LayerParams {
        name: spec.name.clone(),
        weights,
        bias: spec.bias.map(|n| Tensor::zeros(&[n])),
        bn,
    }
}

impl<T: Scalar> Model<T> {
    /// Assembles a model, checking every tensor against the config's layout.
    pub fn from_parts(
        config: ModelConfig,
        params: Vec<LayerParams<T>>,
        tag_vocabulary: Vec<String>,
    ) -> Result<Self> {
        config.validate()?;
        if tag_vocabulary.len() != config.n_tags {
            return Err(Error::ConfigInvalid(format!(
                "vocabulary has {} tags, config expects {}",
                tag_vocabulary.len(),
                config.n_tags
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = tag_vocabulary.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(Error::ConfigInvalid(format!("duplicate tag {dup:?}")));
        }
        let specs = layer_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "config implies {} layers, got {}",
                specs.len(),
                params.len()
            )));
        }
        for (spec, layer) in specs.iter().zip(&params) {
            check_layer(spec, layer)?;
        }
        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        Ok(Self {
            name: "model".to_string(),
            config,
            params,
            tag_vocabulary,
            index,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn layer(&self, name: &str) -> Result<&LayerParams<T>> {
        self.index
            .get(name)
            .map(|&i| &self.params[i])
            .ok_or_else(|| Error::ShapeMismatch(format!("model has no layer {name:?}")))
    }

    pub(crate) fn layer_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::ShapeMismatch(format!("model has no layer {name:?}")))
    }

    pub fn layer_mut(&mut self, name: &str) -> Result<&mut LayerParams<T>> {
        let i = self.layer_index(name)?;
        Ok(&mut self.params[i])
    }

    pub(crate) fn weights(&self, name: &str) -> Result<&Tensor<T>> {
        self.layer(name)?
            .weights
            .as_ref()
            .ok_or_else(|| Error::ShapeMismatch(format!("layer {name:?} has no weights")))
    }

    pub(crate) fn bn(&self, name: &str) -> Result<&BatchNorm<T>> {
        self.layer(name)?
            .bn
            .as_ref()
            .ok_or_else(|| Error::ShapeMismatch(format!("layer {name:?} has no batch-norm")))
    }

    pub fn epsilon(&self) -> T {
        T::of(self.config.bn_epsilon)
    }

    /// Total stored scalars, including batch-norm running statistics.
    pub fn parameter_count(&self) -> usize {
        self.params
            .iter()
            .flat_map(|p| p.named_tensors())
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Trainable tensors in a fixed order (layer order; weights, bias, gamma, beta).
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.params
            .iter_mut()
            .flat_map(|p| p.trainable_mut())
            .collect()
    }

    pub fn trainable(&self) -> Vec<Tensor<T>> {
        let mut copy = self.params.clone();
        copy.iter_mut()
            .flat_map(|p| p.trainable_mut().into_iter().map(|t| t.clone()))
            .collect()
    }

    /// Replaces the trainable tensors, in [`Model::trainable_mut`] order.
    pub fn set_trainable(&mut self, values: &[Tensor<T>]) -> Result<()> {
        let slots = self.trainable_mut();
        if slots.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} trainable tensors, {} values",
                slots.len(),
                values.len()
            )));
        }
        for (slot, v) in slots.into_iter().zip(values) {
            v.expect_shape(slot.shape(), "set_trainable")?;
            *slot = v.clone();
        }
        Ok(())
    }

    /// Same parameters in another numeric mode.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let cast_bn = |bn: &BatchNorm<T>| BatchNorm {
            gamma: bn.gamma.cast(),
            beta: bn.beta.cast(),
            mean: bn.mean.cast(),
            var: bn.var.cast(),
        };
        Model {
            name: self.name.clone(),
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| LayerParams {
                    name: p.name.clone(),
                    weights: p.weights.as_ref().map(Tensor::cast),
                    bias: p.bias.as_ref().map(Tensor::cast),
                    bn: p.bn.as_ref().map(cast_bn),
                })
                .collect(),
            tag_vocabulary: self.tag_vocabulary.clone(),
            index: self.index.clone(),
        }
    }
}

fn check_layer<T: Scalar>(spec: &LayerSpec, layer: &LayerParams<T>) -> Result<()> {
    let mismatch = |what: &str| {
        Error::ShapeMismatch(format!("layer {:?}: {what} does not match config", spec.name))
    };
    if layer.name != spec.name {
        return Err(Error::ShapeMismatch(format!(
            "expected layer {:?}, found {:?}",
            spec.name, layer.name
        )));
    }
    match (&spec.weights, &layer.weights) {
        (None, None) => {}
        (Some(s), Some(w)) if w.shape() == s.as_slice() => {}
        _ => return Err(mismatch("weights")),
    }
    match (spec.bias, &layer.bias) {
        (None, None) => {}
        (Some(n), Some(b)) if b.shape() == [n] => {}
        _ => return Err(mismatch("bias")),
    }
    match (spec.bn, &layer.bn) {
        (None, None) => {}
        (Some(c), Some(bn)) => {
            for t in [&bn.gamma, &bn.beta, &bn.mean, &bn.var] {
                if t.shape() != [c] {
                    return Err(mismatch("batch-norm"));
                }
            }
            if bn.var.data().iter().any(|&v| v < T::zero()) {
                return Err(Error::ConfigInvalid(format!(
                    "layer {:?}: negative batch-norm variance",
                    spec.name
                )));
            }
        }
        _ => return Err(mismatch("batch-norm")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_deterministic() {
        let cfg = ModelConfig::toy_musicnn(Backend::TemporalPooling, 4);
        let a = build_model::<f64>(&cfg, Init::SeededRandom(9), generic_vocabulary(4)).unwrap();
        let b = build_model::<f64>(&cfg, Init::SeededRandom(9), generic_vocabulary(4)).unwrap();
        let c = build_model::<f64>(&cfg, Init::SeededRandom(10), generic_vocabulary(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn modes_share_init_values() {
        let cfg = ModelConfig::toy_vgg(3);
        let a = build_model::<f64>(&cfg, Init::SeededRandom(1), generic_vocabulary(3)).unwrap();
        let b = build_model::<f32>(&cfg, Init::SeededRandom(1), generic_vocabulary(3)).unwrap();
        assert_eq!(a.cast::<f32>(), b);
    }

    #[test]
    fn vocabulary_must_match() {
        let cfg = ModelConfig::toy_vgg(3);
        assert!(build_model::<f32>(&cfg, Init::Zeros, generic_vocabulary(2)).is_err());
        let dup = vec!["a".to_string(), "b".into(), "a".into()];
        assert!(build_model::<f32>(&cfg, Init::Zeros, dup).is_err());
    }

    #[test]
    fn shape_tamper_rejected() {
        let cfg = ModelConfig::toy_vgg(3);
        let m = build_model::<f32>(&cfg, Init::Zeros, generic_vocabulary(3)).unwrap();
        let mut params = m.params.clone();
        params[0].weights = Some(Tensor::zeros(&[1, 1, 3, 3]));
        assert!(matches!(
            Model::from_parts(cfg, params, generic_vocabulary(3)),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
