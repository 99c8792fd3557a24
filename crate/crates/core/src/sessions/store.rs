use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::bandit::{ProbabilityWalk, Provenance, Session, WalkParams, ARMS};

/// One line of `sessions.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub subject_id: String,
    pub provenance: Provenance,
    pub choices: Vec<usize>,
    pub rewards: Vec<u8>,
    pub reward_rate: f64,
    pub probs: Vec<[f64; ARMS]>,
    pub seed: u64,
    pub walk: WalkParams,
}

impl From<&Session> for SessionRecord {
    fn from(s: &Session) -> Self {
        Self {
            subject_id: s.subject_id.clone(),
            provenance: s.provenance.clone(),
            choices: s.choices.clone(),
            rewards: s.rewards.clone(),
            reward_rate: s.reward_rate(),
            probs: s.walk.probs.clone(),
            seed: s.walk.seed,
            walk: s.walk.params,
        }
    }
}

impl TryFrom<SessionRecord> for Session {
    type Error = SessionError;

    fn try_from(r: SessionRecord) -> Result<Self, Self::Error> {
        let n = r.choices.len();
        if r.rewards.len() != n || r.probs.len() != n {
            return Err(SessionError::Data(format!(
                "{}: choices/rewards/probs lengths differ ({n}/{}/{})",
                r.subject_id,
                r.rewards.len(),
                r.probs.len()
            )));
        }
        if let Some(c) = r.choices.iter().find(|&&c| c >= ARMS) {
            return Err(SessionError::Data(format!("{}: choice {c} outside 0..2", r.subject_id)));
        }
        if let Some(x) = r.rewards.iter().find(|&&x| x > 1) {
            return Err(SessionError::Data(format!("{}: reward {x} not in {{0,1}}", r.subject_id)));
        }
        let session = Session {
            subject_id: r.subject_id,
            provenance: r.provenance,
            walk: ProbabilityWalk {
                probs: r.probs,
                seed: r.seed,
                params: r.walk,
            },
            choices: r.choices,
            rewards: r.rewards,
        };
        if (session.reward_rate() - r.reward_rate).abs() > 1e-12 {
            return Err(SessionError::Data(format!(
                "{}: stored reward_rate {} disagrees with rewards ({})",
                session.subject_id,
                r.reward_rate,
                session.reward_rate()
            )));
        }
        Ok(session)
    }
}

pub fn to_jsonl_line(session: &Session) -> String {
    serde_json::to_string(&SessionRecord::from(session)).expect("session records always serialize")
}

pub fn write_sessions<W: Write>(mut out: W, sessions: &[Session]) -> Result<(), SessionError> {
    for s in sessions {
        writeln!(out, "{}", to_jsonl_line(s))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sessions<R: BufRead>(input: R) -> Result<Vec<Session>, SessionError> {
    let mut sessions = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SessionRecord =
            serde_json::from_str(&line).map_err(|source| SessionError::Json { line: i + 1, source })?;
        sessions.push(Session::try_from(record)?);
    }
    Ok(sessions)
}

pub fn save_sessions(path: &Path, sessions: &[Session]) -> Result<(), SessionError> {
    write_sessions(BufWriter::new(File::create(path)?), sessions)
}

pub fn load_sessions(path: &Path) -> Result<Vec<Session>, SessionError> {
    read_sessions(BufReader::new(File::open(path)?))
}

/// Appends one session to a JSONL file, creating it if needed.
pub fn append_session(path: &Path, session: &Session) -> Result<(), SessionError> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", to_jsonl_line(session))?;
    Ok(())
}
