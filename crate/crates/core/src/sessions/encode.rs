use super::SessionError;
use crate::bandit::{Session, ARMS};

/// Features per trial: one-hot choice followed by the reward.
pub const FEATURES: usize = ARMS + 1;

/// `T × 4` observation rows `[one_hot(a_t), r_t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationMatrix {
    rows: Vec<[f64; FEATURES]>,
}

impl ObservationMatrix {
    pub fn rows(&self) -> &[[f64; FEATURES]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn from_rows(rows: Vec<[f64; FEATURES]>) -> Self {
        Self { rows }
    }

    /// Same observations with the choice columns relabelled: original arm
    /// `a` moves to column `mapping[a]`.
    pub fn permute_choice_columns(&self, mapping: [usize; ARMS]) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut out = [0.0; FEATURES];
                for a in 0..ARMS {
                    out[mapping[a]] = row[a];
                }
                out[ARMS] = row[ARMS];
                out
            })
            .collect();
        Self { rows }
    }
}

pub fn encode_observations(session: &Session) -> Result<ObservationMatrix, SessionError> {
    encode_history(&session.choices, &session.rewards)
}

/// Encodes a (possibly partial) history of choices and rewards.
pub fn encode_history(choices: &[usize], rewards: &[u8]) -> Result<ObservationMatrix, SessionError> {
    if choices.len() != rewards.len() {
        return Err(SessionError::Data(format!(
            "{} choices but {} rewards",
            choices.len(),
            rewards.len()
        )));
    }
    let rows = choices
        .iter()
        .zip(rewards)
        .map(|(&c, &r)| {
            if c >= ARMS {
                return Err(SessionError::Data(format!("choice {c} outside 0..2")));
            }
            let mut row = [0.0; FEATURES];
            row[c] = 1.0;
            row[ARMS] = f64::from(r);
            Ok(row)
        })
        .collect::<Result<_, _>>()?;
    Ok(ObservationMatrix { rows })
}

/// Inverse of [`encode_history`].
pub fn decode_observations(obs: &ObservationMatrix) -> Result<(Vec<usize>, Vec<u8>), SessionError> {
    let mut choices = Vec::with_capacity(obs.len());
    let mut rewards = Vec::with_capacity(obs.len());
    for (t, row) in obs.rows.iter().enumerate() {
        let hot: Vec<usize> = (0..ARMS).filter(|&a| row[a] == 1.0).collect();
        let valid = hot.len() == 1 && (0..ARMS).all(|a| row[a] == 0.0 || row[a] == 1.0);
        if !valid {
            return Err(SessionError::Data(format!("row {t} is not one-hot: {row:?}")));
        }
        let reward = match row[ARMS] {
            r if r == 0.0 => 0,
            r if r == 1.0 => 1,
            r => return Err(SessionError::Data(format!("row {t} reward {r} not in {{0,1}}"))),
        };
        choices.push(hot[0]);
        rewards.push(reward);
    }
    Ok((choices, rewards))
}
