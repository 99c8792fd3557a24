use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::bandit::ARMS;
use crate::model::Model;
use crate::sessions::ObservationMatrix;
use crate::training::Example;

/// Anything that predicts the next choice from a history.
pub trait ChoicePredictor: Sync {
    /// Entry `t` is the distribution over the choice at `t + 1`.
    fn predict_session(&self, obs: &ObservationMatrix) -> Result<Vec<[f64; ARMS]>, EvalError>;
}

impl ChoicePredictor for Model {
    fn predict_session(&self, obs: &ObservationMatrix) -> Result<Vec<[f64; ARMS]>, EvalError> {
        Ok(self.predict_all(obs)?)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

/// Fraction of steps, pooled over all sessions, whose argmax prediction
/// equals the next choice.
pub fn accuracy<P: ChoicePredictor + ?Sized>(predictor: &P, sessions: &[Example]) -> Result<AccuracyResult, EvalError> {
    let counts = sessions
        .par_iter()
        .map(|ex| {
            if ex.choices.len() < 2 {
                return Ok((0, 0));
            }
            let probs = predictor.predict_session(&ex.obs)?;
            let steps = ex.choices.len() - 1;
            let correct = (0..steps).filter(|&t| argmax(&probs[t]) == ex.choices[t + 1]).count();
            Ok((correct, steps))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let (correct, total) = counts.iter().fold((0, 0), |(c, t), (dc, dt)| (c + dc, t + dt));
    if total == 0 {
        return Err(EvalError::Usage("no prediction targets in the test sessions".into()));
    }
    Ok(AccuracyResult {
        accuracy: correct as f64 / total as f64,
        correct,
        total,
    })
}
