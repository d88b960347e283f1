//! Downstream classification on clip embeddings, and evaluation metrics.

mod metrics;
mod pca;
mod pipeline;
mod svm;

pub use metrics::{accuracy, confusion_matrix, macro_metrics, pr_auc, roc_auc, MacroMetrics};
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use pipeline::{run_pipeline, DatasetManifest, ManifestRow, PipelineReport, Split};
pub use svm::{svm_fit, svm_predict, SvmConfig, SvmModel};
