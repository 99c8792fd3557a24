//! Metrics over trained models: next-choice accuracy, linear probes,
//! PCA and silhouette separability, the feed-forward baseline and the
//! embedding export.

mod accuracy;
mod export;
mod linalg;
mod mlp;
mod pca;
mod probe;
mod report;
mod silhouette;

use thiserror::Error;

pub use accuracy::{accuracy, argmax, AccuracyResult, ChoicePredictor};
pub use export::{
    build_export, scale_name, ArrayEntry, EmbeddingExport, EmbeddingIndex, SubjectEntry, EXPORT_BIN, EXPORT_FORMAT,
    EXPORT_INDEX,
};
pub use mlp::{train_mlp, MlpBaseline, MlpConfig};
pub use pca::{pca_project, PcaProjection};
pub use probe::{linear_probe, ProbeResult, PROBE_MAX_ITERATIONS, PROBE_MIN_ROWS, PROBE_TOLERANCE};
pub use report::{
    equivariance_gap, session_embeddings, stack, step_embeddings, style_probe, subspace_report, EvalReport,
    SessionSummary, StyleReport, SubspaceRow, SILHOUETTE_PCA_DIMS, SUBSPACES,
};
pub use silhouette::{silhouette, SilhouetteReport};

use crate::autodiff::AutodiffError;
use crate::model::ModelError;
use crate::sessions::SessionError;

/// Chance accuracy for a three-way choice.
pub const CHANCE: f64 = 1.0 / 3.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed export index: {0}")]
    Json(#[from] serde_json::Error),
}
