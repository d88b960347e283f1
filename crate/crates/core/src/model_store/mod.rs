//! Weight containers and the model registry.

mod container;
mod registry;

pub use container::{decode_model, encode_model, load_model, read_records, save_model, TensorRecord, MAGIC};
pub use registry::{
    registry_get, registry_model, registry_seed, resolve_model, MODEL_NAMES, MSD_TAGS, MTT_TAGS,
};
