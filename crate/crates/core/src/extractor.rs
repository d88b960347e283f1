//! Taggram plus named intermediate features for a file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::arch::{Family, Model, ModelConfig};
use crate::dsp::{load_wav, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tagger::{taggram_from_traces, trace_waveform, Taggram};
use crate::tensor::Tensor;

/// Feature name → tensor stacked over patches (leading axis = patch index).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSet<T> {
    pub features: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn keys(&self) -> Vec<&str> {
        self.features.keys().map(String::as_str).collect()
    }

    pub fn get(&self, key: &str) -> Result<&Tensor<T>> {
        self.features.get(key).ok_or_else(|| Error::UnknownFeatureKey {
            key: key.to_string(),
            available: self.features.keys().cloned().collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction<T> {
    pub taggram: Taggram<T>,
    pub tags: Vec<String>,
    pub features: FeatureSet<T>,
}

/// Per-clip reduction across patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Max,
}

pub fn extract_waveform<T: Scalar>(
    wave: &Waveform<T>,
    model: &Model<T>,
    extract_features: bool,
) -> Result<Extraction<T>> {
    let (traces, times) = trace_waveform(wave, model)?;
    let taggram = taggram_from_traces(&traces, times, model)?;
    let mut features = FeatureSet::default();
    if extract_features {
        let keys: Vec<String> = traces[0]
            .features
            .keys()
            .filter(|k| *k != "output")
            .cloned()
            .collect();
        for key in keys {
            let per_patch: Vec<Tensor<T>> = traces.iter().map(|t| t.features[&key].clone()).collect();
            features.features.insert(key, Tensor::stack(&per_patch)?);
        }
    }
    Ok(Extraction {
        tags: taggram.tags.clone(),
        taggram,
        features,
    })
}

/// Taggram, tags and (optionally) every named intermediate feature of `path`.
pub fn extract<T: Scalar>(
    path: impl AsRef<Path>,
    model: &Model<T>,
    extract_features: bool,
) -> Result<Extraction<T>> {
    extract_waveform(&load_wav(path)?, model, extract_features)
}

/// Flattens each patch's `key` feature and reduces across patches.
pub fn clip_embedding<T: Scalar>(
    features: &FeatureSet<T>,
    key: &str,
    reduction: Reduction,
) -> Result<Vec<T>> {
    let stacked = features.get(key)?;
    let p = stacked.shape()[0];
    let dim = stacked.len() / p;
    let rows = stacked.data().chunks_exact(dim);
    let mut out = match reduction {
        Reduction::Mean => vec![T::zero(); dim],
        Reduction::Max => vec![T::neg_infinity(); dim],
    };
    for row in rows {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = match reduction {
                Reduction::Mean => *o + v,
                Reduction::Max => o.max(v),
            };
        }
    }
    if reduction == Reduction::Mean {
        let n = T::of(p as f64);
        out.iter_mut().for_each(|o| *o = *o / n);
    }
    Ok(out)
}

/// Feature used for clip embeddings by default: the deepest representation
/// before the output layer.
pub fn default_embedding_key(config: &ModelConfig) -> &'static str {
    match config.family {
        Family::Musicnn => "penultimate",
        Family::Vgg => "pool5",
    }
}

/// One row per patch, the flattened feature, values with 6 decimals.
pub fn feature_csv<T: Scalar>(features: &FeatureSet<T>, key: &str) -> Result<String> {
    let stacked = features.get(key)?;
    let p = stacked.shape()[0];
    let dim = stacked.len() / p;
    let mut s = String::new();
    for row in stacked.data().chunks_exact(dim) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[[f64; 3]]) -> FeatureSet<f64> {
        let t = Tensor::new(vec![rows.len(), 3], rows.concat()).unwrap();
        FeatureSet {
            features: BTreeMap::from([("penultimate".to_string(), t)]),
        }
    }

    #[test]
    fn single_patch_mean_is_identity() {
        let f = set(&[[1.0, -2.0, 3.5]]);
        assert_eq!(clip_embedding(&f, "penultimate", Reduction::Mean).unwrap(), [1.0, -2.0, 3.5]);
    }

    #[test]
    fn reductions() {
        let f = set(&[[1.0, -2.0, 3.0], [3.0, 0.0, -1.0]]);
        assert_eq!(clip_embedding(&f, "penultimate", Reduction::Mean).unwrap(), [2.0, -1.0, 1.0]);
        assert_eq!(clip_embedding(&f, "penultimate", Reduction::Max).unwrap(), [3.0, 0.0, 3.0]);
    }

    #[test]
    fn unknown_key() {
        let f = set(&[[0.0; 3]]);
        assert!(matches!(
            clip_embedding(&f, "cnn9", Reduction::Mean),
            Err(Error::UnknownFeatureKey { .. })
        ));
    }

    #[test]
    fn csv_rows() {
        let f = set(&[[1.0, -2.0, 0.1234567], [0.0, 0.0, 0.0]]);
        assert_eq!(
            feature_csv(&f, "penultimate").unwrap(),
            "1.000000,-2.000000,0.123457\n0.000000,0.000000,0.000000\n"
        );
    }
}
