//! One human player's session: walk, history and the model's running
//! predictions.

use multiscale_client::{ChoiceOutcome, EmbeddingTrajectory, SessionState};
use multiscale_core::bandit::{draw_reward, generate_walk, ProbabilityWalk, Provenance, Session, WalkParams, ARMS};
use multiscale_core::eval::argmax;
use multiscale_core::model::Model;
use multiscale_core::sessions::encode_history;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ApiError;

#[derive(Debug)]
pub struct LiveSession {
    pub id: String,
    walk: ProbabilityWalk,
    rng: ChaCha8Rng,
    choices: Vec<usize>,
    rewards: Vec<u8>,
    predictions: Vec<[f64; ARMS]>,
    exported_as: Option<String>,
}

impl LiveSession {
    pub fn new(id: String, seed: u64, trials: usize, walk: WalkParams) -> Result<Self, ApiError> {
        let walk = generate_walk(seed, trials, walk).map_err(ApiError::internal)?;
        Ok(Self {
            id,
            walk,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5DEE_CE66_D1CE_5EED),
            choices: Vec::new(),
            rewards: Vec::new(),
            predictions: Vec::new(),
            exported_as: None,
        })
    }

    pub fn trials(&self) -> usize {
        self.walk.probs.len()
    }

    pub fn trial(&self) -> usize {
        self.choices.len()
    }

    pub fn is_complete(&self) -> bool {
        self.trial() >= self.trials()
    }

    fn revealed_walk(&self) -> Option<Vec<[f64; ARMS]>> {
        self.is_complete().then(|| self.walk.probs.clone())
    }

    /// Plays one round and predicts the next choice from the updated
    /// history.
    pub fn choose(&mut self, arm: usize, model: &Model) -> Result<ChoiceOutcome, ApiError> {
        if arm >= ARMS {
            return Err(ApiError::Unprocessable(format!("arm must be 0, 1 or 2, got {arm}")));
        }
        if self.is_complete() {
            return Err(ApiError::Conflict("session is complete".into()));
        }
        let t = self.trial();
        let reward = draw_reward(&self.walk, t, arm, &mut self.rng).map_err(ApiError::internal)?;
        let model_was_right = self.predictions.last().map(|p| argmax(p) == arm);
        self.choices.push(arm);
        self.rewards.push(reward);
        let obs = encode_history(&self.choices, &self.rewards).map_err(ApiError::internal)?;
        let z = model.embed(&obs, t).map_err(ApiError::internal)?;
        let prediction = model.predict_next(&z.z()).map_err(ApiError::internal)?;
        self.predictions.push(prediction);
        Ok(ChoiceOutcome {
            reward,
            trial: self.trial(),
            prediction_next: prediction,
            model_was_right,
            complete: self.is_complete(),
            walk: self.revealed_walk(),
        })
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            session_id: self.id.clone(),
            trial: self.trial(),
            trials: self.trials(),
            choices: self.choices.clone(),
            rewards: self.rewards.clone(),
            predictions: self.predictions.clone(),
            complete: self.is_complete(),
            walk: self.revealed_walk(),
        }
    }

    pub fn embeddings(&self, model: &Model) -> Result<EmbeddingTrajectory, ApiError> {
        if self.choices.is_empty() {
            return Err(ApiError::Conflict("no trials recorded yet".into()));
        }
        let obs = encode_history(&self.choices, &self.rewards).map_err(ApiError::internal)?;
        let all = model.embed_all(&obs).map_err(ApiError::internal)?;
        Ok(EmbeddingTrajectory {
            session_id: self.id.clone(),
            z_rp: all.iter().map(|e| e.z_rp.clone()).collect(),
            z_s: all.iter().map(|e| e.z_s.clone()).collect(),
            z_l: all.iter().map(|e| e.z_l.clone()).collect(),
        })
    }

    pub fn subject_id(&self) -> String {
        format!("human-{}", self.id)
    }

    pub fn to_session(&self) -> Session {
        Session {
            subject_id: self.subject_id(),
            provenance: Provenance::human(),
            walk: self.walk.clone(),
            choices: self.choices.clone(),
            rewards: self.rewards.clone(),
        }
    }

    pub fn exported_as(&self) -> Option<&str> {
        self.exported_as.as_deref()
    }

    pub fn mark_exported(&mut self) {
        self.exported_as = Some(self.subject_id());
    }
}
