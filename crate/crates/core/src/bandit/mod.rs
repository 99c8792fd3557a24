//! Three-armed bandit with drifting Bernoulli arms and the synthetic
//! players that stand in for human participants.

mod policy;
mod population;
mod session;
mod walk;

use thiserror::Error;

pub use policy::{AgentFamily, AgentParams, AgentPolicy, Q_INIT};
pub use population::{simulate_population, simulate_session, subject_rng, ParamRanges, PopulationSpec, SCREEN_THRESHOLD};
pub use session::{Provenance, Session, Source};
pub use walk::{draw_reward, generate_walk, ProbabilityWalk, WalkParams};

pub const ARMS: usize = 3;

/// Default number of trials in a session.
pub const TRIALS: usize = 300;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
}
