//! The five named models and their tag vocabularies.

use std::path::Path;

use crate::arch::{build_model, Init, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::rng::fnv1a;
use crate::scalar::Scalar;

pub const MODEL_NAMES: [&str; 5] = [
    "MTT_musicnn",
    "MSD_musicnn",
    "MSD_musicnn_big",
    "MTT_vgg",
    "MSD_vgg",
];

/// MagnaTagATune 50-tag vocabulary, in output order.
pub const MTT_TAGS: [&str; 50] = [
    "guitar", "classical", "slow", "techno", "strings", "drums", "electronic", "rock", "fast",
    "piano", "ambient", "beat", "violin", "vocal", "synth", "female", "indian", "opera", "male",
    "singing", "vocals", "no vocals", "harpsichord", "loud", "quiet", "flute", "woman",
    "male vocal", "no vocal", "pop", "soft", "sitar", "solo", "man", "classic", "choir", "voice",
    "new age", "dance", "male voice", "female vocal", "beats", "harp", "cello", "no voice",
    "weird", "country", "metal", "female voice", "choral",
];

/// Million Song Dataset 50-tag vocabulary, in output order.
pub const MSD_TAGS: [&str; 50] = [
    "rock", "pop", "alternative", "indie", "electronic", "female vocalists", "dance", "00s",
    "alternative rock", "jazz", "beautiful", "metal", "chillout", "male vocalists",
    "classic rock", "soul", "indie rock", "mellow", "electronica", "80s", "folk", "90s", "chill",
    "instrumental", "punk", "oldies", "blues", "hard rock", "ambient", "acoustic",
    "experimental", "female vocalist", "guitar", "hip-hop", "70s", "party", "country",
    "easy listening", "sexy", "catchy", "funk", "electro", "heavy metal", "progressive rock",
    "60s", "rnb", "indie pop", "sad", "house", "happy",
];

fn unknown(name: &str) -> Error {
    Error::UnknownModel {
        name: name.to_string(),
        valid: MODEL_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

/// Canonical config and ordered vocabulary of a registry model.
pub fn registry_get(name: &str) -> Result<(ModelConfig, Vec<String>)> {
    let tags: &[&str] = match name.split('_').next() {
        Some("MTT") => &MTT_TAGS,
        Some("MSD") => &MSD_TAGS,
        _ => return Err(unknown(name)),
    };
    let n = tags.len();
    let config = match name {
        "MTT_musicnn" | "MSD_musicnn" => ModelConfig::musicnn(n),
        "MSD_musicnn_big" => ModelConfig::musicnn_big(n),
        "MTT_vgg" | "MSD_vgg" => ModelConfig::vgg(n),
        _ => return Err(unknown(name)),
    };
    Ok((config, tags.iter().map(|s| s.to_string()).collect()))
}

/// Seed of the shipped weights for a registry name.
pub fn registry_seed(name: &str) -> u64 {
    fnv1a(name.as_bytes())
}

/// Registry model with its deterministic seeded weights.
pub fn registry_model<T: Scalar>(name: &str) -> Result<Model<T>> {
    let (config, vocab) = registry_get(name)?;
    Ok(build_model(&config, Init::SeededRandom(registry_seed(name)), vocab)?.with_name(name))
}

/// Resolves a registry name, or else a path to an `.mcn` container.
pub fn resolve_model<T: Scalar>(name_or_path: &str) -> Result<Model<T>> {
    if MODEL_NAMES.contains(&name_or_path) {
        return registry_model(name_or_path);
    }
    let path = Path::new(name_or_path);
    if path.extension().is_some_and(|e| e == "mcn") || path.is_file() {
        return super::load_model(path);
    }
    Err(unknown(name_or_path))
}
