use serde::{Deserialize, Serialize};

pub const ARMS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    pub export_loaded: bool,
    pub active_sessions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub trial: usize,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRequest {
    pub arm: usize,
}

/// Result of one round. `trial` counts completed rounds. `walk` is present
/// only once the session is complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub reward: u8,
    pub trial: usize,
    pub prediction_next: [f64; ARMS],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_was_right: Option<bool>,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk: Option<Vec<[f64; ARMS]>>,
}

/// Everything a client needs to resume a session. `predictions[t]` was
/// shown after round `t` and targets round `t + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub trial: usize,
    pub trials: usize,
    pub choices: Vec<usize>,
    pub rewards: Vec<u8>,
    pub predictions: Vec<[f64; ARMS]>,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk: Option<Vec<[f64; ARMS]>>,
}

/// Per-round embeddings of a live session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTrajectory {
    pub session_id: String,
    pub z_rp: Vec<Vec<f64>>,
    pub z_s: Vec<Vec<f64>>,
    pub z_l: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportOutcome {
    pub session_id: String,
    pub subject_id: String,
    /// `false` when the session had already been exported.
    pub written: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub subject_id: String,
    pub label: String,
    pub coords: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub subspace: String,
    pub pca: usize,
    /// Distinct labels in first-seen order.
    pub labels: Vec<String>,
    pub explained_variance: Vec<f64>,
    pub points: Vec<Point>,
}

/// A dataset subject's full history with the model's predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectTimeline {
    pub subject_id: String,
    pub label: String,
    pub choices: Vec<usize>,
    pub rewards: Vec<u8>,
    pub walk: Vec<[f64; ARMS]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<[f64; ARMS]>>,
}
