//! musicnn and vgg-like forward graphs, built from a [`ModelConfig`].

mod config;
mod graph;
mod model;

pub use config::{Backend, Family, ModelConfig, TIMBRAL_KERNEL_FRAMES};
pub use graph::{
    backend_attention, backend_pooling, backward, forward, forward_batch, musicnn_frontend,
    musicnn_midend, vgg_forward, AttentionOutput, BnMode, ForwardTrace, FrontendOutput,
    LayerGrads, ModelGrads, PoolingOutput, Tape,
};
pub use model::{build_model, generic_vocabulary, layer_specs, Init, LayerSpec, Model};

/// Trace keys of a musicnn model with the temporal-pooling back-end.
pub const MUSICNN_POOLING_KEYS: [&str; 9] = [
    "timbral",
    "temporal",
    "cnn1",
    "cnn2",
    "cnn3",
    "mean_pool",
    "max_pool",
    "penultimate",
    "output",
];

pub const MUSICNN_ATTENTION_KEYS: [&str; 9] = [
    "timbral",
    "temporal",
    "cnn1",
    "cnn2",
    "cnn3",
    "attention_weights",
    "context",
    "penultimate",
    "output",
];

pub const VGG_KEYS: [&str; 6] = ["pool1", "pool2", "pool3", "pool4", "pool5", "output"];

/// Trace keys a model's forward pass produces.
pub fn trace_keys(config: &ModelConfig) -> &'static [&'static str] {
    match (config.family, config.backend) {
        (Family::Vgg, _) => &VGG_KEYS,
        (Family::Musicnn, Backend::TemporalPooling) => &MUSICNN_POOLING_KEYS,
        (Family::Musicnn, Backend::Attention) => &MUSICNN_ATTENTION_KEYS,
    }
}
