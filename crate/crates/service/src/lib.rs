//! HTTP service for live play against a trained model and for browsing a
//! precomputed embedding export.
//!
//! Sessions live in memory and expire after an idle period. Walk
//! probabilities stay hidden until a session's final round.

mod error;
mod live;
mod routes;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use multiscale_core::bandit::{Session, WalkParams, TRIALS};
use multiscale_core::eval::EmbeddingExport;
use multiscale_core::model::Model;
use multiscale_core::training::mix_seed;
use tokio::net::TcpListener;

pub use error::ApiError;
pub use live::LiveSession;
pub use routes::router;

pub const DEFAULT_PORT: u16 = 8787;
pub const SESSION_TTL: Duration = Duration::from_secs(3600);

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub trials: usize,
    pub walk: WalkParams,
    /// Base seed for live walks; each new session mixes in a counter.
    pub seed: u64,
    pub session_ttl: Duration,
    /// JSONL file completed sessions are appended to.
    pub export_path: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            trials: TRIALS,
            walk: WalkParams::default(),
            seed: 0,
            session_ttl: SESSION_TTL,
            export_path: PathBuf::from("human_sessions.jsonl"),
        }
    }
}

pub(crate) struct Slot {
    pub live: tokio::sync::Mutex<LiveSession>,
    touched: Mutex<Instant>,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub model: Option<Arc<Model>>,
    pub export: Option<EmbeddingExport>,
    /// Dataset sessions by subject id, for the subject timeline endpoint.
    pub subjects: HashMap<String, Session>,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
    created: AtomicU64,
    pub(crate) export_file: tokio::sync::Mutex<()>,
}

impl AppState {
    pub fn new(config: ServiceConfig, model: Option<Model>) -> Self {
        Self {
            config,
            model: model.map(Arc::new),
            export: None,
            subjects: HashMap::new(),
            sessions: Mutex::new(HashMap::new()),
            created: AtomicU64::new(0),
            export_file: tokio::sync::Mutex::new(()),
        }
    }

    pub fn with_export(mut self, export: EmbeddingExport) -> Self {
        self.export = Some(export);
        self
    }

    pub fn with_subjects(mut self, sessions: Vec<Session>) -> Self {
        self.subjects = sessions.into_iter().map(|s| (s.subject_id.clone(), s)).collect();
        self
    }

    pub(crate) fn model(&self) -> Result<Arc<Model>, ApiError> {
        self.model
            .clone()
            .ok_or_else(|| ApiError::Unavailable("no checkpoint loaded".into()))
    }

    pub fn active_sessions(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }

    pub(crate) fn create_session(&self, now: Instant) -> Result<(String, usize), ApiError> {
        let n = self.created.fetch_add(1, Ordering::Relaxed);
        let id = uuid::Uuid::new_v4().simple().to_string();
        let live = LiveSession::new(id.clone(), mix_seed(&[self.config.seed, n]), self.config.trials, self.config.walk)?;
        let trials = live.trials();
        let slot = Arc::new(Slot {
            live: tokio::sync::Mutex::new(live),
            touched: Mutex::new(now),
        });
        self.sessions.lock().expect("session map poisoned").insert(id.clone(), slot);
        Ok((id, trials))
    }

    /// Looks a session up and refreshes its idle timer.
    pub(crate) fn slot(&self, id: &str, now: Instant) -> Result<Arc<Slot>, ApiError> {
        let mut map = self.sessions.lock().expect("session map poisoned");
        let slot = map.get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("unknown session {id}")))?;
        let mut touched = slot.touched.lock().expect("slot poisoned");
        if now.saturating_duration_since(*touched) > self.config.session_ttl {
            drop(touched);
            map.remove(id);
            return Err(ApiError::NotFound(format!("session {id} expired")));
        }
        *touched = now;
        drop(touched);
        Ok(slot)
    }

    /// Drops sessions idle longer than the TTL; returns how many went.
    pub fn purge(&self, now: Instant) -> usize {
        let ttl = self.config.session_ttl;
        let mut map = self.sessions.lock().expect("session map poisoned");
        let before = map.len();
        map.retain(|_, slot| now.saturating_duration_since(*slot.touched.lock().expect("slot poisoned")) <= ttl);
        before - map.len()
    }
}

/// Serves `state` on `listener` until the task is dropped, sweeping
/// expired sessions once a minute.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let sweeper = {
        let state = state.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                let gone = state.purge(Instant::now());
                if gone > 0 {
                    tracing::info!(gone, "expired idle sessions");
                }
            }
        })
    };
    let result = axum::serve(listener, router(state)).await;
    sweeper.abort();
    result
}
