use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use multiscale_client::{
    ChoiceOutcome, ChoiceRequest, CreatedSession, EmbeddingTrajectory, ExportOutcome, Health, Point, PointCloud,
    SessionState, SubjectTimeline,
};
use multiscale_core::eval::pca_project;
use multiscale_core::sessions::{append_session, encode_history};
use serde::Deserialize;
use tower_http::cors::CorsLayer;

use crate::{ApiError, AppState};

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", get(session_state))
        .route("/api/session/{id}/choice", post(choose))
        .route("/api/session/{id}/embedding", get(embedding))
        .route("/api/session/{id}/export", post(export))
        .route("/api/dataset/embeddings", get(dataset_embeddings))
        .route("/api/dataset/subjects/{id}", get(subject))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

async fn health(State(state): Shared) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model_loaded: state.model.is_some(),
        export_loaded: state.export.is_some(),
        active_sessions: state.active_sessions(),
    })
}

async fn create_session(State(state): Shared) -> Result<Json<CreatedSession>, ApiError> {
    state.model()?;
    let (session_id, trials) = state.create_session(Instant::now())?;
    tracing::debug!(%session_id, "session created");
    Ok(Json(CreatedSession {
        session_id,
        trial: 0,
        trials,
    }))
}

async fn session_state(State(state): Shared, Path(id): Path<String>) -> Result<Json<SessionState>, ApiError> {
    let slot = state.slot(&id, Instant::now())?;
    let live = slot.live.lock().await;
    Ok(Json(live.state()))
}

async fn choose(
    State(state): Shared,
    Path(id): Path<String>,
    body: Result<Json<ChoiceRequest>, JsonRejection>,
) -> Result<Json<ChoiceOutcome>, ApiError> {
    let model = state.model()?;
    let slot = state.slot(&id, Instant::now())?;
    let Json(req) = body.map_err(|e| ApiError::Unprocessable(e.body_text()))?;
    let mut live = slot.live.lock().await;
    Ok(Json(live.choose(req.arm, &model)?))
}

async fn embedding(State(state): Shared, Path(id): Path<String>) -> Result<Json<EmbeddingTrajectory>, ApiError> {
    let model = state.model()?;
    let slot = state.slot(&id, Instant::now())?;
    let live = slot.live.lock().await;
    Ok(Json(live.embeddings(&model)?))
}

async fn export(State(state): Shared, Path(id): Path<String>) -> Result<Json<ExportOutcome>, ApiError> {
    let slot = state.slot(&id, Instant::now())?;
    let mut live = slot.live.lock().await;
    if !live.is_complete() {
        return Err(ApiError::Conflict(format!(
            "session has {} of {} trials",
            live.trial(),
            live.trials()
        )));
    }
    let written = if live.exported_as().is_some() {
        false
    } else {
        let _file = state.export_file.lock().await;
        append_session(&state.config.export_path, &live.to_session()).map_err(ApiError::internal)?;
        live.mark_exported();
        true
    };
    Ok(Json(ExportOutcome {
        session_id: id,
        subject_id: live.subject_id(),
        written,
    }))
}

#[derive(Debug, Deserialize)]
struct CloudQuery {
    #[serde(default = "default_subspace")]
    subspace: String,
    #[serde(default = "default_pca")]
    pca: usize,
}

fn default_subspace() -> String {
    "long".into()
}

fn default_pca() -> usize {
    2
}

async fn dataset_embeddings(
    State(state): Shared,
    query: Result<Query<CloudQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<PointCloud>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::Unprocessable(e.body_text()))?;
    let export = state
        .export
        .as_ref()
        .ok_or_else(|| ApiError::NotFound("no embedding export loaded".into()))?;
    let x = export
        .array(&q.subspace)
        .ok_or_else(|| ApiError::Unprocessable(format!("unknown subspace {:?}", q.subspace)))?;
    let (rows, cols) = x.dims2();
    if q.pca == 0 || q.pca > cols {
        return Err(ApiError::Unprocessable(format!("pca must be in 1..={cols}, got {}", q.pca)));
    }
    let proj = pca_project(x, q.pca).map_err(|e| ApiError::Unprocessable(e.to_string()))?;
    let (_, r) = proj.coords.dims2();
    let total = proj.kept_columns.len() as f64;
    let mut explained: Vec<f64> = proj.eigenvalues.iter().take(r).map(|l| l / total).collect();
    explained.resize(q.pca, 0.0);
    let mut by_row = vec![None; rows];
    for s in &export.index.subjects {
        if s.row < rows {
            by_row[s.row] = Some(s);
        }
    }
    let mut labels: Vec<String> = Vec::new();
    let mut points = Vec::with_capacity(rows);
    for (row, subject) in by_row.into_iter().enumerate() {
        let subject = subject.ok_or_else(|| ApiError::internal(format!("export row {row} has no subject")))?;
        if !labels.contains(&subject.label) {
            labels.push(subject.label.clone());
        }
        let mut coords: Vec<f64> = (0..r).map(|j| proj.coords.data()[row * r + j]).collect();
        coords.resize(q.pca, 0.0);
        points.push(Point {
            subject_id: subject.subject_id.clone(),
            label: subject.label.clone(),
            coords,
        });
    }
    Ok(Json(PointCloud {
        subspace: q.subspace,
        pca: q.pca,
        labels,
        explained_variance: explained,
        points,
    }))
}

async fn subject(State(state): Shared, Path(id): Path<String>) -> Result<Json<SubjectTimeline>, ApiError> {
    let session = state
        .subjects
        .get(&id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown subject {id}")))?;
    let predictions = match &state.model {
        Some(model) => {
            let obs = encode_history(&session.choices, &session.rewards).map_err(ApiError::internal)?;
            Some(model.predict_all(&obs).map_err(ApiError::internal)?)
        }
        None => None,
    };
    Ok(Json(SubjectTimeline {
        subject_id: session.subject_id.clone(),
        label: session.provenance.label().into(),
        choices: session.choices.clone(),
        rewards: session.rewards.clone(),
        walk: session.walk.probs.clone(),
        predictions,
    }))
}
