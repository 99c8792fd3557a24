use serde::{Deserialize, Serialize};

use super::{AgentFamily, AgentParams, ProbabilityWalk};

/// Where a session came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentParams>,
    /// Arm relabelling applied after the session was recorded:
    /// `permutation[a]` is the new label of original arm `a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<[usize; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Agent,
    Human,
}

impl Provenance {
    pub fn human() -> Self {
        Self {
            source: Source::Human,
            agent: None,
            permutation: None,
        }
    }

    pub fn agent(params: AgentParams) -> Self {
        Self {
            source: Source::Agent,
            agent: Some(params),
            permutation: None,
        }
    }

    pub fn family(&self) -> Option<AgentFamily> {
        self.agent.map(|a| a.family())
    }

    /// Family name, or `"human"`.
    pub fn label(&self) -> &'static str {
        match self.family() {
            Some(f) => f.name(),
            None => "human",
        }
    }
}

/// One player's full trial.
#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub subject_id: String,
    pub provenance: Provenance,
    pub walk: ProbabilityWalk,
    pub choices: Vec<usize>,
    pub rewards: Vec<u8>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn reward_rate(&self) -> f64 {
        if self.rewards.is_empty() {
            return 0.0;
        }
        self.rewards.iter().map(|&r| f64::from(r)).sum::<f64>() / self.rewards.len() as f64
    }
}
