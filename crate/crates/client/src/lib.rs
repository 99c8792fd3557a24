//! JSON bodies exchanged with the play service, and a small async client.

mod wire;

use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use wire::*;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server answered {status}: {message}")]
    Status { status: StatusCode, message: String },
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            ClientError::Http(e) => e.status(),
        }
    }
}

/// Client for one service base URL, e.g. `http://127.0.0.1:8787`.
#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
        Err(ClientError::Status { status, message })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(self.url(path)).send().await?).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: Option<&B>) -> Result<T, ClientError> {
        let mut req = self.http.post(self.url(path));
        if let Some(b) = body {
            req = req.json(b);
        }
        Self::decode(req.send().await?).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/api/health").await
    }

    pub async fn create_session(&self) -> Result<CreatedSession, ClientError> {
        self.post::<(), _>("/api/session", None).await
    }

    pub async fn choose(&self, session_id: &str, arm: usize) -> Result<ChoiceOutcome, ClientError> {
        self.post(&format!("/api/session/{session_id}/choice"), Some(&ChoiceRequest { arm })).await
    }

    pub async fn session(&self, session_id: &str) -> Result<SessionState, ClientError> {
        self.get(&format!("/api/session/{session_id}")).await
    }

    pub async fn embedding(&self, session_id: &str) -> Result<EmbeddingTrajectory, ClientError> {
        self.get(&format!("/api/session/{session_id}/embedding")).await
    }

    pub async fn export(&self, session_id: &str) -> Result<ExportOutcome, ClientError> {
        self.post::<(), _>(&format!("/api/session/{session_id}/export"), None).await
    }

    pub async fn dataset_embeddings(&self, subspace: &str, pca: usize) -> Result<PointCloud, ClientError> {
        self.get(&format!("/api/dataset/embeddings?subspace={subspace}&pca={pca}")).await
    }

    pub async fn subject(&self, subject_id: &str) -> Result<SubjectTimeline, ClientError> {
        self.get(&format!("/api/dataset/subjects/{subject_id}")).await
    }
}
