use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SimError, ARMS};

/// Initial Q-value for every arm (prior mean reward).
pub const Q_INIT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentFamily {
    EpsilonGreedyQ,
    SoftmaxQ,
    Wsls,
    Sticky,
    UniformRandom,
}

impl AgentFamily {
    pub const ALL: [AgentFamily; 5] = [
        AgentFamily::EpsilonGreedyQ,
        AgentFamily::SoftmaxQ,
        AgentFamily::Wsls,
        AgentFamily::Sticky,
        AgentFamily::UniformRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentFamily::EpsilonGreedyQ => "epsilon_greedy_q",
            AgentFamily::SoftmaxQ => "softmax_q",
            AgentFamily::Wsls => "wsls",
            AgentFamily::Sticky => "sticky",
            AgentFamily::UniformRandom => "uniform_random",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&f| f == self).expect("listed")
    }
}

impl fmt::Display for AgentFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AgentFamily {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| SimError::Config(format!("unknown agent family {s:?}")))
    }
}

/// Family plus its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AgentParams {
    EpsilonGreedyQ { epsilon: f64, learning_rate: f64 },
    SoftmaxQ { temperature: f64, learning_rate: f64 },
    Wsls { lapse: f64 },
    Sticky { stickiness: f64 },
    UniformRandom,
}

impl AgentParams {
    pub fn family(&self) -> AgentFamily {
        match self {
            AgentParams::EpsilonGreedyQ { .. } => AgentFamily::EpsilonGreedyQ,
            AgentParams::SoftmaxQ { .. } => AgentFamily::SoftmaxQ,
            AgentParams::Wsls { .. } => AgentFamily::Wsls,
            AgentParams::Sticky { .. } => AgentFamily::Sticky,
            AgentParams::UniformRandom => AgentFamily::UniformRandom,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SimError::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        let rate = |v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(SimError::Config(format!("learning rate must lie in (0, 1], got {v}")))
            }
        };
        match *self {
            AgentParams::EpsilonGreedyQ { epsilon, learning_rate } => {
                unit("epsilon", epsilon)?;
                rate(learning_rate)
            }
            AgentParams::SoftmaxQ { temperature, learning_rate } => {
                if !(temperature > 0.0 && temperature.is_finite()) {
                    return Err(SimError::Config(format!("temperature must be > 0, got {temperature}")));
                }
                rate(learning_rate)
            }
            AgentParams::Wsls { lapse } => unit("lapse", lapse),
            AgentParams::Sticky { stickiness } => unit("stickiness", stickiness),
            AgentParams::UniformRandom => Ok(()),
        }
    }
}

/// A simulated player: choice rule plus the state it learns from.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentPolicy {
    params: AgentParams,
    q: [f64; ARMS],
    last: Option<(usize, u8)>,
}

impl AgentPolicy {
    pub fn new(params: AgentParams) -> Result<Self, SimError> {
        params.validate()?;
        Ok(Self {
            params,
            q: [Q_INIT; ARMS],
            last: None,
        })
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn q_values(&self) -> [f64; ARMS] {
        self.q
    }

    pub fn last(&self) -> Option<(usize, u8)> {
        self.last
    }

    /// Overrides the Q-values; used to set up specific decision states.
    pub fn with_q_values(mut self, q: [f64; ARMS]) -> Self {
        self.q = q;
        self
    }

    pub fn with_last(mut self, choice: usize, reward: u8) -> Self {
        self.last = Some((choice, reward));
        self
    }

    /// Probability of picking each arm at the next step.
    pub fn choice_probs(&self) -> [f64; ARMS] {
        let uniform = [1.0 / ARMS as f64; ARMS];
        match self.params {
            AgentParams::UniformRandom => uniform,
            AgentParams::EpsilonGreedyQ { epsilon, .. } => {
                let best = self.q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ties = self.q.iter().filter(|&&q| q == best).count() as f64;
                let mut p = [epsilon / ARMS as f64; ARMS];
                for (pa, &q) in p.iter_mut().zip(&self.q) {
                    if q == best {
                        *pa += (1.0 - epsilon) / ties;
                    }
                }
                p
            }
            AgentParams::SoftmaxQ { temperature, .. } => {
                let best = self.q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut p = self.q.map(|q| ((q - best) / temperature).exp());
                let z: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= z);
                p
            }
            AgentParams::Wsls { lapse } => match self.last {
                None => uniform,
                Some((arm, reward)) => {
                    let mut p = [lapse / ARMS as f64; ARMS];
                    if reward == 1 {
                        p[arm] += 1.0 - lapse;
                    } else {
                        for (a, pa) in p.iter_mut().enumerate() {
                            if a != arm {
                                *pa += (1.0 - lapse) / (ARMS - 1) as f64;
                            }
                        }
                    }
                    p
                }
            },
            AgentParams::Sticky { stickiness } => match self.last {
                None => uniform,
                Some((arm, _)) => {
                    let mut p = [(1.0 - stickiness) / ARMS as f64; ARMS];
                    p[arm] += stickiness;
                    p
                }
            },
        }
    }

    /// Samples the next arm from [`AgentPolicy::choice_probs`].
    pub fn choose<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.choice_probs(), rng)
    }

    pub fn update(&mut self, choice: usize, reward: u8) {
        match self.params {
            AgentParams::EpsilonGreedyQ { learning_rate, .. } | AgentParams::SoftmaxQ { learning_rate, .. } => {
                let q = &mut self.q[choice];
                *q += learning_rate * (f64::from(reward) - *q);
            }
            AgentParams::Wsls { .. } | AgentParams::Sticky { .. } => self.last = Some((choice, reward)),
            AgentParams::UniformRandom => {}
        }
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_params() -> Vec<AgentParams> {
        vec![
            AgentParams::EpsilonGreedyQ {
                epsilon: 0.1,
                learning_rate: 0.3,
            },
            AgentParams::SoftmaxQ {
                temperature: 0.2,
                learning_rate: 0.3,
            },
            AgentParams::Wsls { lapse: 0.05 },
            AgentParams::Sticky { stickiness: 0.8 },
            AgentParams::UniformRandom,
        ]
    }

    #[test]
    fn uniform_frequencies_are_one_third() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = AgentPolicy::new(AgentParams::UniformRandom).unwrap();
        let mut counts = [0usize; 3];
        let n = 30_000;
        for _ in 0..n {
            counts[policy.choose(&mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn wsls_without_lapse_stays_after_win() {
        let policy = AgentPolicy::new(AgentParams::Wsls { lapse: 0.0 }).unwrap().with_last(1, 1);
        assert_eq!(policy.choice_probs(), [0.0, 1.0, 0.0]);
        let policy = policy.with_last(1, 0);
        assert_eq!(policy.choice_probs(), [0.5, 0.0, 0.5]);
    }

    #[test]
    fn greedy_picks_argmax() {
        let policy = AgentPolicy::new(AgentParams::EpsilonGreedyQ {
            epsilon: 0.0,
            learning_rate: 0.5,
        })
        .unwrap()
        .with_q_values([0.9, 0.1, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(policy.choose(&mut rng), 0);
        }
    }

    #[test]
    fn q_update_rule() {
        let mut p = AgentPolicy::new(AgentParams::SoftmaxQ {
            temperature: 0.3,
            learning_rate: 0.5,
        })
        .unwrap();
        p.update(1, 1);
        assert_eq!(p.q_values()[1], 0.75);

        let mut p = AgentPolicy::new(AgentParams::EpsilonGreedyQ {
            epsilon: 0.1,
            learning_rate: 1.0,
        })
        .unwrap()
        .with_q_values([0.3, 0.7, 0.2]);
        p.update(1, 0);
        assert_eq!(p.q_values()[1], 0.0);
        p.update(2, 1);
        assert_eq!(p.q_values()[2], 1.0);

        let mut u = AgentPolicy::new(AgentParams::UniformRandom).unwrap();
        let before = u.clone();
        u.update(2, 1);
        assert_eq!(u, before);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for params in all_params() {
            let mut p = AgentPolicy::new(params).unwrap();
            for _ in 0..200 {
                let probs = p.choice_probs();
                assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{params:?}");
                assert!(probs.iter().all(|&x| x >= 0.0));
                let c = p.choose(&mut rng);
                p.update(c, rng.random_range(0..2));
                assert!(p.q_values().iter().all(|q| q.is_finite()));
            }
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let bad = [
            AgentParams::EpsilonGreedyQ {
                epsilon: 1.5,
                learning_rate: 0.2,
            },
            AgentParams::EpsilonGreedyQ {
                epsilon: 0.1,
                learning_rate: 0.0,
            },
            AgentParams::SoftmaxQ {
                temperature: 0.0,
                learning_rate: 0.2,
            },
            AgentParams::Sticky { stickiness: -0.1 },
        ];
        for params in bad {
            assert!(AgentPolicy::new(params).is_err(), "{params:?}");
        }
    }

    #[test]
    fn family_names_round_trip() {
        for f in AgentFamily::ALL {
            assert_eq!(f.name().parse::<AgentFamily>().unwrap(), f);
            assert_eq!(serde_json::to_string(&f).unwrap(), format!("\"{}\"", f.name()));
        }
    }
}
