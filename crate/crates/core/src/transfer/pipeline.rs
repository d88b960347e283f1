//! Clip embeddings → PCA → SVM over a labelled manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::metrics::{accuracy, confusion_matrix};
use super::pca::{pca_fit, pca_transform};
use super::svm::{svm_fit, svm_predict, SvmConfig};
use crate::arch::Model;
use crate::error::{Error, Result};
use crate::extractor::{clip_embedding, extract, Reduction};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: PathBuf,
    pub label: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    /// Sorted distinct labels; class `i` is `labels[i]`.
    pub labels: Vec<String>,
}

#[derive(serde::Deserialize)]
struct RawRow {
    path: String,
    label: String,
    split: String,
}

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Manifest("no rows".into()));
        }
        let mut labels: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
        labels.sort();
        labels.dedup();
        Ok(Self { rows, labels })
    }

    pub fn class_of(&self, label: &str) -> usize {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).expect("label from manifest")
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// CSV text with header `path,label,split`. Relative paths resolve
    /// against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Manifest(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["path", "label", "split"] {
            return Err(Error::Manifest(format!(
                "header must be path,label,split, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<RawRow>().enumerate() {
            let raw = rec.map_err(|e| Error::Manifest(format!("row {}: {e}", i + 1)))?;
            let split = match raw.split.as_str() {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(Error::Manifest(format!(
                        "row {}: split must be train or test, got {other:?}",
                        i + 1
                    )))
                }
            };
            if raw.label.is_empty() || raw.path.is_empty() {
                return Err(Error::Manifest(format!("row {}: empty path or label", i + 1)));
            }
            let path = PathBuf::from(&raw.path);
            let path = if path.is_absolute() { path } else { base.join(path) };
            rows.push(ManifestRow {
                path,
                label: raw.label,
                split,
            });
        }
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub model: String,
    pub feature: String,
    pub labels: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub embedding_dim: usize,
    pub pca_requested: usize,
    pub pca_used: usize,
    pub warnings: Vec<String>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Test-split counts, `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub seed: u64,
}

impl PipelineReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {}", self.model);
        let _ = writeln!(s, "feature: {}", self.feature);
        let _ = writeln!(s, "classes: {}", self.labels.join(", "));
        let _ = writeln!(s, "train clips: {}", self.n_train);
        let _ = writeln!(s, "test clips: {}", self.n_test);
        let _ = writeln!(s, "embedding dim: {}", self.embedding_dim);
        let _ = writeln!(s, "pca components: {} (requested {})", self.pca_used, self.pca_requested);
        let _ = writeln!(s, "seed: {}", self.seed);
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        let _ = writeln!(s, "train accuracy: {:.6}", self.train_accuracy);
        let _ = writeln!(s, "test accuracy: {:.6}", self.test_accuracy);
        s
    }

    /// Header row of predicted labels, then one row per true label.
    pub fn confusion_csv(&self) -> String {
        let mut s = format!("true\\predicted,{}\n", self.labels.join(","));
        for (label, row) in self.labels.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
            let _ = writeln!(s, "{label},{}", cells.join(","));
        }
        s
    }
}

fn embeddings<T: Scalar>(
    rows: &[&ManifestRow],
    model: &Model<T>,
    key: &str,
) -> Result<Vec<Vec<f64>>> {
    rows.par_iter()
        .map(|r| {
            let ex = extract(&r.path, model, true)?;
            let e = clip_embedding(&ex.features, key, Reduction::Mean)?;
            Ok(e.into_iter().map(|v| v.as_f64()).collect())
        })
        .collect()
}

/// Embeds every clip with `model`, fits PCA and the SVM on the train split
/// and scores both splits. `k` is clamped to what the training data supports.
pub fn run_pipeline<T: Scalar>(
    manifest: &DatasetManifest,
    model: &Model<T>,
    feature_key: &str,
    k: usize,
    svm: &SvmConfig,
) -> Result<PipelineReport> {
    let train: Vec<&ManifestRow> = manifest.split(Split::Train).collect();
    let test: Vec<&ManifestRow> = manifest.split(Split::Test).collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::Manifest("both train and test splits need rows".into()));
    }
    if k == 0 {
        return Err(Error::ConfigInvalid("PCA components must be at least 1".into()));
    }
    let x_train = embeddings(&train, model, feature_key)?;
    let x_test = embeddings(&test, model, feature_key)?;
    let y_train: Vec<usize> = train.iter().map(|r| manifest.class_of(&r.label)).collect();
    let y_test: Vec<usize> = test.iter().map(|r| manifest.class_of(&r.label)).collect();
    let dim = x_train[0].len();

    let mut warnings = Vec::new();
    let limit = x_train.len().min(dim);
    let k_fit = if k > limit {
        warnings.push(format!(
            "requested {k} PCA components but {} train clips of dimension {dim} support at most {limit}",
            x_train.len()
        ));
        limit
    } else {
        k
    };
    let pca = pca_fit(&x_train, k_fit)?;
    if pca.rank_deficient() {
        warnings.push(format!(
            "train embeddings have rank {}, using {} PCA components",
            pca.k(),
            pca.k()
        ));
    }
    let project = |xs: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| pca_transform(&pca, x)).collect()
    };
    let (p_train, p_test) = (project(&x_train)?, project(&x_test)?);
    let model_svm = svm_fit(&p_train, &y_train, svm)?;
    let predict = |xs: &[Vec<f64>]| -> Result<Vec<usize>> {
        xs.iter().map(|x| Ok(svm_predict(&model_svm, x)?.0)).collect()
    };
    let (pred_train, pred_test) = (predict(&p_train)?, predict(&p_test)?);
    Ok(PipelineReport {
        model: model.name.clone(),
        feature: feature_key.to_string(),
        labels: manifest.labels.clone(),
        n_train: train.len(),
        n_test: test.len(),
        embedding_dim: dim,
        pca_requested: k,
        pca_used: pca.k(),
        warnings,
        train_accuracy: accuracy(&pred_train, &y_train),
        test_accuracy: accuracy(&pred_test, &y_test),
        confusion: confusion_matrix(&pred_test, &y_test, manifest.labels.len()),
        seed: svm.seed,
    })
}
