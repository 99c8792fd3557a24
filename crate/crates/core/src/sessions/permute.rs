use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::bandit::{Session, ARMS};

/// Bijection on arm labels; `mapping[a]` is the image of arm `a`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; ARMS]", into = "[usize; ARMS]")]
pub struct Permutation([usize; ARMS]);

impl Permutation {
    pub fn new(mapping: [usize; ARMS]) -> Result<Self, SessionError> {
        let mut seen = [false; ARMS];
        for &m in &mapping {
            if m >= ARMS || seen[m] {
                return Err(SessionError::Data(format!("{mapping:?} is not a permutation of 0..{ARMS}")));
            }
            seen[m] = true;
        }
        Ok(Self(mapping))
    }

    pub fn identity() -> Self {
        Self([0, 1, 2])
    }

    /// All 3! relabellings, identity first.
    pub fn all() -> [Permutation; 6] {
        [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]].map(Permutation)
    }

    pub fn apply(&self, arm: usize) -> usize {
        self.0[arm]
    }

    pub fn mapping(&self) -> [usize; ARMS] {
        self.0
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Permutation) -> Permutation {
        Permutation(first.0.map(|a| self.0[a]))
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = [0; ARMS];
        for (a, &m) in self.0.iter().enumerate() {
            inv[m] = a;
        }
        Permutation(inv)
    }

    /// Moves entry `a` of `values` to position `mapping[a]`.
    pub fn permute_values<T: Copy + Default>(&self, values: [T; ARMS]) -> [T; ARMS] {
        let mut out = [T::default(); ARMS];
        for a in 0..ARMS {
            out[self.0[a]] = values[a];
        }
        out
    }
}

impl TryFrom<[usize; ARMS]> for Permutation {
    type Error = SessionError;

    fn try_from(mapping: [usize; ARMS]) -> Result<Self, Self::Error> {
        Permutation::new(mapping)
    }
}

impl From<Permutation> for [usize; ARMS] {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

/// Relabels every choice and the matching walk columns; rewards are
/// untouched. The provenance records the cumulative relabelling.
pub fn permute_session(session: &Session, perm: &Permutation) -> Session {
    let mut out = session.clone();
    out.choices = session.choices.iter().map(|&c| perm.apply(c)).collect();
    out.walk.probs = session.walk.probs.iter().map(|row| perm.permute_values(*row)).collect();
    let previous = session
        .provenance
        .permutation
        .and_then(|m| Permutation::new(m).ok())
        .unwrap_or_else(Permutation::identity);
    out.provenance.permutation = Some(perm.after(&previous).mapping());
    out
}

/// Every session under all six relabellings, grouped per input session.
pub fn augment_all(sessions: &[Session]) -> Vec<Session> {
    sessions
        .iter()
        .flat_map(|s| Permutation::all().into_iter().map(move |p| permute_session(s, &p)))
        .collect()
}
