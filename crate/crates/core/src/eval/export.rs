//! Per-session embedding export: a flat little-endian `f64` file plus a
//! JSON index describing its arrays.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{session_embeddings, EvalError, SessionSummary};
use crate::autodiff::Tensor;
use crate::bandit::Session;
use crate::model::{Model, Scale};

pub const EXPORT_FORMAT: &str = "multiscale-embeddings/1";
pub const EXPORT_BIN: &str = "embeddings.bin";
pub const EXPORT_INDEX: &str = "embeddings.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub subject_id: String,
    /// Agent family name, or `human`.
    pub label: String,
    pub row: usize,
}

/// One row-major `rows × cols` array starting `offset` bytes into the
/// binary file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingIndex {
    pub format: String,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub summary: SessionSummary,
    pub subjects: Vec<SubjectEntry>,
    pub arrays: Vec<ArrayEntry>,
}

/// A loaded export.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingExport {
    pub index: EmbeddingIndex,
    pub arrays: Vec<(String, Tensor)>,
}

impl EmbeddingExport {
    pub fn array(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

pub fn scale_name(scale: Scale) -> &'static str {
    match scale {
        Scale::Recent => "recent",
        Scale::Short => "short",
        Scale::Long => "long",
    }
}

/// Builds the export for `sessions`: one array per scale plus `full`.
pub fn build_export(model: &Model, sessions: &[Session], summary: SessionSummary) -> Result<EmbeddingExport, EvalError> {
    if sessions.is_empty() {
        return Err(EvalError::Usage("nothing to export".into()));
    }
    let embeddings = session_embeddings(model, sessions, summary)?;
    let mut arrays = Vec::new();
    for &scale in model.config.scales() {
        let rows: Vec<f64> = embeddings.iter().flat_map(|e| e.get(scale).iter().copied()).collect();
        arrays.push((scale_name(scale).to_string(), Tensor::matrix(sessions.len(), model.config.dim(scale), rows)?));
    }
    let full: Vec<f64> = embeddings.iter().flat_map(|e| e.z()).collect();
    arrays.push(("full".into(), Tensor::matrix(sessions.len(), model.config.embedding_dim(), full)?));
    let mut offset = 0;
    let entries = arrays
        .iter()
        .map(|(name, t)| {
            let (rows, cols) = t.dims2();
            let e = ArrayEntry {
                name: name.clone(),
                rows,
                cols,
                offset,
            };
            offset += rows * cols * 8;
            e
        })
        .collect();
    let subjects = sessions
        .iter()
        .enumerate()
        .map(|(row, s)| SubjectEntry {
            subject_id: s.subject_id.clone(),
            label: s.provenance.label().into(),
            row,
        })
        .collect();
    Ok(EmbeddingExport {
        index: EmbeddingIndex {
            format: EXPORT_FORMAT.into(),
            dtype: "float64".into(),
            byte_order: "little".into(),
            layout: "row-major".into(),
            summary,
            subjects,
            arrays: entries,
        },
        arrays,
    })
}

impl EmbeddingExport {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.arrays
            .iter()
            .flat_map(|(_, t)| t.data().iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(EXPORT_BIN), self.to_bytes())?;
        fs::write(dir.join(EXPORT_INDEX), serde_json::to_string_pretty(&self.index)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, EvalError> {
        let index: EmbeddingIndex = serde_json::from_str(&fs::read_to_string(dir.join(EXPORT_INDEX))?)?;
        if index.format != EXPORT_FORMAT || index.dtype != "float64" || index.byte_order != "little" {
            return Err(EvalError::Usage(format!("unsupported export {:?}", index.format)));
        }
        let bytes = fs::read(dir.join(EXPORT_BIN))?;
        let mut arrays = Vec::new();
        for a in &index.arrays {
            let end = a.offset + a.rows * a.cols * 8;
            let chunk = bytes
                .get(a.offset..end)
                .ok_or_else(|| EvalError::Usage(format!("array {} runs past the end of the file", a.name)))?;
            let data = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            arrays.push((a.name.clone(), Tensor::matrix(a.rows, a.cols, data)?));
        }
        if index.subjects.iter().any(|s| arrays.iter().any(|(_, t)| s.row >= t.dims2().0)) {
            return Err(EvalError::Usage("subject row outside the arrays".into()));
        }
        Ok(Self { index, arrays })
    }
}
