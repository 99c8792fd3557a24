use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::bandit::Session;

/// Train/test assignment by individual. Serialized as the split manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Shuffled split of the distinct subject ids. `ratio` is the training
/// fraction, rounded to the nearest subject and kept in `[1, n−1]`.
pub fn split(sessions: &[Session], ratio: f64, seed: u64) -> Result<DatasetSplit, SessionError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(SessionError::Usage(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let ids: BTreeSet<&str> = sessions.iter().map(|s| s.subject_id.as_str()).collect();
    if ids.len() < 2 {
        return Err(SessionError::Usage(format!(
            "need at least 2 subjects to split, got {}",
            ids.len()
        )));
    }
    let mut ids: Vec<String> = ids.into_iter().map(String::from).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
    let test_ids = ids.split_off(n_train);
    Ok(DatasetSplit {
        seed,
        train_ids: ids,
        test_ids,
    })
}

impl DatasetSplit {
    /// Sessions of each side, in manifest order. Sessions whose subject is
    /// not listed are dropped.
    pub fn partition(&self, sessions: &[Session]) -> (Vec<Session>, Vec<Session>) {
        let mut by_id: HashMap<&str, Vec<&Session>> = HashMap::new();
        for s in sessions {
            by_id.entry(s.subject_id.as_str()).or_default().push(s);
        }
        let pick = |ids: &[String]| -> Vec<Session> {
            ids.iter()
                .flat_map(|id| by_id.get(id.as_str()).into_iter().flatten().map(|s| (*s).clone()))
                .collect()
        };
        (pick(&self.train_ids), pick(&self.test_ids))
    }

    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("serializable") + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| SessionError::Json { line: 1, source })
    }
}
