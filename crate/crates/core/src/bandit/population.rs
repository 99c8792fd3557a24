use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{draw_reward, generate_walk, AgentFamily, AgentParams, AgentPolicy, Provenance, Session, SimError, WalkParams};

/// Reward-rate threshold used when screening is enabled.
pub const SCREEN_THRESHOLD: f64 = 0.42;

/// Per-session parameter ranges, sampled uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub epsilon: (f64, f64),
    pub learning_rate: (f64, f64),
    pub temperature: (f64, f64),
    pub stickiness: (f64, f64),
    pub lapse: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            epsilon: (0.05, 0.3),
            learning_rate: (0.1, 0.5),
            temperature: (0.1, 0.5),
            stickiness: (0.6, 0.95),
            lapse: (0.0, 0.1),
        }
    }
}

impl ParamRanges {
    fn sample<R: Rng + ?Sized>(&self, family: AgentFamily, rng: &mut R) -> AgentParams {
        let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        match family {
            AgentFamily::EpsilonGreedyQ => AgentParams::EpsilonGreedyQ {
                epsilon: draw(self.epsilon),
                learning_rate: draw(self.learning_rate),
            },
            AgentFamily::SoftmaxQ => AgentParams::SoftmaxQ {
                temperature: draw(self.temperature),
                learning_rate: draw(self.learning_rate),
            },
            AgentFamily::Wsls => AgentParams::Wsls { lapse: draw(self.lapse) },
            AgentFamily::Sticky => AgentParams::Sticky {
                stickiness: draw(self.stickiness),
            },
            AgentFamily::UniformRandom => AgentParams::UniformRandom,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    /// Sessions per family, simulated in this order.
    pub counts: Vec<(AgentFamily, usize)>,
    pub ranges: ParamRanges,
    pub trials: usize,
    pub walk: WalkParams,
    /// Drop sessions whose reward rate falls below this value.
    pub screen: Option<f64>,
}

impl PopulationSpec {
    /// `n` sessions of every family with default ranges.
    pub fn balanced(n: usize) -> Self {
        Self {
            counts: AgentFamily::ALL.iter().map(|&f| (f, n)).collect(),
            ranges: ParamRanges::default(),
            trials: 300,
            walk: WalkParams::default(),
            screen: None,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|(_, n)| n).sum()
    }
}

/// Generator for subject `index`, independent of every other subject.
pub fn subject_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Plays `policy` through a fresh walk.
pub fn simulate_session<R: Rng + ?Sized>(
    subject_id: String,
    params: AgentParams,
    walk_seed: u64,
    trials: usize,
    walk: WalkParams,
    rng: &mut R,
) -> Result<Session, SimError> {
    let walk = generate_walk(walk_seed, trials, walk)?;
    let mut policy = AgentPolicy::new(params)?;
    let mut choices = Vec::with_capacity(trials);
    let mut rewards = Vec::with_capacity(trials);
    for t in 0..trials {
        let arm = policy.choose(rng);
        let reward = draw_reward(&walk, t, arm, rng)?;
        policy.update(arm, reward);
        choices.push(arm);
        rewards.push(reward);
    }
    Ok(Session {
        subject_id,
        provenance: Provenance::agent(params),
        walk,
        choices,
        rewards,
    })
}

/// Simulates every subject of `spec`. Subject `i` draws from its own
/// stream of `seed`, so the output does not depend on scheduling.
pub fn simulate_population(spec: &PopulationSpec, seed: u64) -> Result<Vec<Session>, SimError> {
    spec.walk.validate()?;
    if spec.trials == 0 {
        return Err(SimError::Config("trials must be ≥ 1".into()));
    }
    let jobs: Vec<(usize, AgentFamily)> = spec
        .counts
        .iter()
        .flat_map(|&(family, n)| std::iter::repeat_n(family, n))
        .enumerate()
        .collect();
    let sessions: Result<Vec<Session>, SimError> = jobs
        .par_iter()
        .map(|&(index, family)| {
            let mut rng = subject_rng(seed, index as u64);
            let params = spec.ranges.sample(family, &mut rng);
            let walk_seed = rng.next_u64();
            simulate_session(format!("agent-{index:05}"), params, walk_seed, spec.trials, spec.walk, &mut rng)
        })
        .collect();
    let mut sessions = sessions?;
    if let Some(threshold) = spec.screen {
        sessions.retain(|s| s.reward_rate() >= threshold);
    }
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family_mean(sessions: &[Session], family: AgentFamily) -> f64 {
        let rates: Vec<f64> = sessions
            .iter()
            .filter(|s| s.provenance.family() == Some(family))
            .map(|s| s.reward_rate())
            .collect();
        rates.iter().sum::<f64>() / rates.len() as f64
    }

    #[test]
    fn empty_spec_gives_no_sessions() {
        assert!(simulate_population(&PopulationSpec::balanced(0), 1).unwrap().is_empty());
    }

    #[test]
    fn sessions_are_well_formed_and_deterministic() {
        let spec = PopulationSpec::balanced(4);
        let a = simulate_population(&spec, 17).unwrap();
        let b = simulate_population(&spec, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        for s in &a {
            assert_eq!(s.choices.len(), 300);
            assert_eq!(s.rewards.len(), 300);
            assert_eq!(s.walk.len(), 300);
            assert!(s.choices.iter().all(|&c| c < 3));
        }
        let c = simulate_population(&spec, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn learners_beat_uniform_agents() {
        let sessions = simulate_population(&PopulationSpec::balanced(200), 3).unwrap();
        assert_eq!(sessions.len(), 1000);
        let uniform = family_mean(&sessions, AgentFamily::UniformRandom);
        for f in [AgentFamily::EpsilonGreedyQ, AgentFamily::SoftmaxQ] {
            let m = family_mean(&sessions, f);
            assert!(m > uniform, "{f}: {m} vs uniform {uniform}");
        }
        let learners: Vec<f64> = sessions
            .iter()
            .filter(|s| matches!(s.provenance.family(), Some(AgentFamily::EpsilonGreedyQ | AgentFamily::SoftmaxQ)))
            .map(|s| s.reward_rate())
            .collect();
        let overall = learners.iter().sum::<f64>() / learners.len() as f64;
        assert!(overall > uniform);
    }

    #[test]
    fn wsls_without_lapse_always_stays_after_reward() {
        let ranges = ParamRanges {
            lapse: (0.0, 0.0),
            ..Default::default()
        };
        let spec = PopulationSpec {
            counts: vec![(AgentFamily::Wsls, 20)],
            ranges,
            ..PopulationSpec::balanced(0)
        };
        for s in simulate_population(&spec, 8).unwrap() {
            for t in 0..s.len() - 1 {
                if s.rewards[t] == 1 {
                    assert_eq!(s.choices[t + 1], s.choices[t]);
                } else {
                    assert_ne!(s.choices[t + 1], s.choices[t]);
                }
            }
        }
    }

    #[test]
    fn screening_drops_low_earners() {
        let spec = PopulationSpec {
            screen: Some(SCREEN_THRESHOLD),
            ..PopulationSpec::balanced(40)
        };
        let kept = simulate_population(&spec, 2).unwrap();
        assert!(!kept.is_empty() && kept.len() < 200);
        assert!(kept.iter().all(|s| s.reward_rate() >= SCREEN_THRESHOLD));
    }

    #[test]
    fn parameters_fall_in_ranges() {
        let r = ParamRanges::default();
        for s in simulate_population(&PopulationSpec::balanced(30), 4).unwrap() {
            let inside = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
            let ok = match s.provenance.agent.unwrap() {
                AgentParams::EpsilonGreedyQ { epsilon, learning_rate } => {
                    inside(epsilon, r.epsilon) && inside(learning_rate, r.learning_rate)
                }
                AgentParams::SoftmaxQ { temperature, learning_rate } => {
                    inside(temperature, r.temperature) && inside(learning_rate, r.learning_rate)
                }
                AgentParams::Wsls { lapse } => inside(lapse, r.lapse),
                AgentParams::Sticky { stickiness } => inside(stickiness, r.stickiness),
                AgentParams::UniformRandom => true,
            };
            assert!(ok);
        }
    }
}
