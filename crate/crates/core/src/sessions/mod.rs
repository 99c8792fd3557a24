//! Session persistence, train/test splitting, observation encoding and
//! arm-relabelling augmentation.

mod encode;
mod permute;
mod split;
mod store;

use thiserror::Error;

pub use encode::{decode_observations, encode_history, encode_observations, ObservationMatrix, FEATURES};
pub use permute::{augment_all, permute_session, Permutation};
pub use split::{split, DatasetSplit};
pub use store::{append_session, load_sessions, read_sessions, save_sessions, to_jsonl_line, write_sessions, SessionRecord};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed JSON on line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("usage error: {0}")]
    Usage(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{simulate_population, PopulationSpec, ProbabilityWalk, Provenance, Session, WalkParams};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn tiny(choices: Vec<usize>, rewards: Vec<u8>) -> Session {
        let n = choices.len();
        Session {
            subject_id: "s".into(),
            provenance: Provenance::human(),
            walk: ProbabilityWalk {
                probs: (0..n).map(|t| [0.1 + t as f64 * 0.01, 0.5, 0.8]).collect(),
                seed: 1,
                params: WalkParams::default(),
            },
            choices,
            rewards,
        }
    }

    fn population(n: usize, seed: u64) -> Vec<Session> {
        simulate_population(&PopulationSpec::balanced(n), seed).unwrap()
    }

    #[test]
    fn encode_examples() {
        let obs = encode_observations(&tiny(vec![0], vec![1])).unwrap();
        assert_eq!(obs.rows(), &[[1.0, 0.0, 0.0, 1.0]]);
        let obs = encode_observations(&tiny(vec![2, 1], vec![0, 0])).unwrap();
        assert_eq!(obs.rows(), &[[0.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 0.0]]);
        assert!(matches!(encode_history(&[3], &[0]), Err(SessionError::Data(_))));
    }

    #[test]
    fn decode_inverts_encode() {
        for s in population(20, 5) {
            let (c, r) = decode_observations(&encode_observations(&s).unwrap()).unwrap();
            assert_eq!(c, s.choices);
            assert_eq!(r, s.rewards);
        }
    }

    #[test]
    fn permutation_examples() {
        let s = tiny(vec![0, 2, 1], vec![1, 0, 1]);
        assert_eq!(permute_session(&s, &Permutation::identity()).choices, s.choices);
        let p = Permutation::new([1, 2, 0]).unwrap();
        let out = permute_session(&s, &p);
        assert_eq!(out.choices, vec![1, 0, 2]);
        assert_eq!(out.rewards, s.rewards);
        // walk column a moves to p(a)
        assert_eq!(out.walk.probs[0], [0.8, 0.1, 0.5]);
        assert_eq!(out.provenance.permutation, Some([1, 2, 0]));
        // composing records the cumulative relabelling
        let twice = permute_session(&out, &p);
        assert_eq!(twice.provenance.permutation, Some([2, 0, 1]));
        assert!(Permutation::new([0, 0, 1]).is_err());
        assert_eq!(p.inverse().after(&p), Permutation::identity());
    }

    #[test]
    fn augmentation_is_six_fold() {
        let s = tiny(vec![0, 1, 2, 2], vec![1, 0, 0, 1]);
        let out = augment_all(std::slice::from_ref(&s));
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|o| o.rewards == s.rewards));
        let distinct: HashSet<Vec<usize>> = out.iter().map(|o| o.choices.clone()).collect();
        assert_eq!(distinct.len(), 6);
        assert!(augment_all(&[]).is_empty());
    }

    #[test]
    fn split_examples() {
        let sessions = population(200, 1);
        let a = split(&sessions, 0.8, 3).unwrap();
        assert_eq!((a.train_ids.len(), a.test_ids.len()), (800, 200));
        assert_eq!(a, split(&sessions, 0.8, 3).unwrap());
        let train: HashSet<_> = a.train_ids.iter().collect();
        assert!(a.test_ids.iter().all(|id| !train.contains(id)));
        assert_eq!(train.len() + a.test_ids.len(), 1000);
        assert_ne!(a, split(&sessions, 0.8, 4).unwrap());

        assert!(matches!(split(&sessions[..1], 0.8, 0), Err(SessionError::Usage(_))));
        assert!(matches!(split(&sessions, 1.0, 0), Err(SessionError::Usage(_))));
    }

    #[test]
    fn augmentation_after_split_never_leaks() {
        let sessions = population(10, 2);
        let sp = split(&sessions, 0.8, 9).unwrap();
        let (train, test) = sp.partition(&sessions);
        let augmented = augment_all(&train);
        assert_eq!(augmented.len(), 6 * train.len());
        let test_ids: HashSet<_> = test.iter().map(|s| s.subject_id.clone()).collect();
        assert!(augmented.iter().all(|s| !test_ids.contains(&s.subject_id)));
    }

    #[test]
    fn jsonl_round_trip_is_lossless() {
        let sessions = population(3, 12);
        let mut buf = Vec::new();
        write_sessions(&mut buf, &sessions).unwrap();
        let back = read_sessions(buf.as_slice()).unwrap();
        assert_eq!(back, sessions);
        let augmented = augment_all(&sessions[..2]);
        let mut buf = Vec::new();
        write_sessions(&mut buf, &augmented).unwrap();
        assert_eq!(read_sessions(buf.as_slice()).unwrap(), augmented);
    }

    #[test]
    fn reader_rejects_inconsistent_records() {
        let s = tiny(vec![0, 1], vec![1, 1]);
        let mut rec = SessionRecord::from(&s);
        rec.reward_rate = 0.5;
        let line = serde_json::to_string(&rec).unwrap();
        assert!(matches!(read_sessions(line.as_bytes()), Err(SessionError::Data(_))));
        let mut rec = SessionRecord::from(&s);
        rec.choices.push(1);
        let line = serde_json::to_string(&rec).unwrap();
        assert!(matches!(read_sessions(line.as_bytes()), Err(SessionError::Data(_))));
        assert!(matches!(read_sessions("{not json".as_bytes()), Err(SessionError::Json { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn encoding_is_permutation_equivariant(
            choices in proptest::collection::vec(0usize..3, 1..60),
            seed in any::<u64>(),
        ) {
            let rewards: Vec<u8> = choices.iter().enumerate().map(|(i, c)| ((seed >> (i % 64)) as u8 ^ *c as u8) & 1).collect();
            let s = tiny(choices, rewards);
            let base = encode_observations(&s).unwrap();
            for p in Permutation::all() {
                let lhs = encode_observations(&permute_session(&s, &p)).unwrap();
                prop_assert_eq!(lhs, base.permute_choice_columns(p.mapping()));
            }
        }

        #[test]
        fn records_round_trip(rate_bits in proptest::collection::vec(0u8..2, 1..40), p in 0.0f64..1.0) {
            let n = rate_bits.len();
            let mut s = tiny(vec![1; n], rate_bits);
            s.walk.probs = (0..n).map(|t| [p, p / 3.0, (p + t as f64).fract()]).collect();
            let line = to_jsonl_line(&s);
            let back = read_sessions(line.as_bytes()).unwrap();
            prop_assert_eq!(back, vec![s]);
        }
    }
}
