//! Losses, the AdamW optimizer, the epoch loop and checkpoints.

mod adamw;
mod checkpoint;
mod losses;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adamw::{adamw_step, AdamW, OptimizerState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use losses::{
    action_loss, latent_loss, latent_targets, sample_steps, session_loss, LossParts, SessionSample, Targets,
};
pub use trainer::{
    run_epochs, train, EpochLoss, EpochRecord, Example, ModelObjective, Objective, TrainOutput, LOSS_CSV_HEADER,
};

use crate::autodiff::AutodiffError;
use crate::model::ModelError;
use crate::sessions::SessionError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: u64 },
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Weight on the latent losses.
    pub alpha: f64,
    /// Largest short-scale target offset, in trials.
    pub delta_short: usize,
    /// Largest long-scale target offset, in trials.
    pub delta_long: usize,
    pub batch_sessions: usize,
    pub timesteps_per_session: usize,
    pub seed: u64,
    /// Also pull the target's prediction toward the online embedding.
    pub symmetrize: bool,
    /// Write a checkpoint every this many epochs; 0 writes only the last.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            lr: 0.01,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            alpha: 1.0,
            delta_short: 10,
            delta_long: 150,
            batch_sessions: 8,
            timesteps_per_session: 32,
            seed: 0,
            symmetrize: false,
            checkpoint_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: &str| Err(TrainError::Config(msg.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be non-negative");
        }
        if self.delta_short == 0 || self.delta_long <= self.delta_short {
            return fail("offsets must satisfy 1 ≤ delta_short < delta_long");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return fail("eps must be positive and weight_decay non-negative");
        }
        if self.batch_sessions == 0 || self.timesteps_per_session == 0 {
            return fail("batch sizes must be positive");
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// SplitMix64 finaliser over a sequence of words; used to derive
/// independent RNG seeds for epochs, batches and sessions.
pub fn mix_seed(words: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &w in words {
        h ^= w;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

#[cfg(test)]
mod tests;
