use serde::{Deserialize, Serialize};

use super::{ModelConfig, Scale};
use crate::autodiff::Tensor;
use crate::sessions::{ObservationMatrix, FEATURES};

/// Inclusive step range; negative steps are padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRange {
    pub start: i64,
    pub end: i64,
}

impl WindowRange {
    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    /// `[features × len]` frames plus validity mask. Steps before 0 or at
    /// or beyond the observed history are zero frames with mask `false`.
    pub fn frames(&self, obs: &ObservationMatrix) -> (Tensor, Vec<bool>) {
        let len = self.len();
        let mut data = vec![0.0; FEATURES * len];
        let mut mask = vec![false; len];
        for (j, step) in (self.start..=self.end).enumerate() {
            if step < 0 || step as usize >= obs.len() {
                continue;
            }
            mask[j] = true;
            let row = obs.rows()[step as usize];
            for f in 0..FEATURES {
                data[f * len + j] = row[f];
            }
        }
        (Tensor::matrix(FEATURES, len, data).expect("non-empty window"), mask)
    }
}

/// The three receptive windows at step `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowTriple {
    pub recent: WindowRange,
    pub short: WindowRange,
    pub long: WindowRange,
}

impl WindowTriple {
    pub fn get(&self, scale: Scale) -> WindowRange {
        match scale {
            Scale::Recent => self.recent,
            Scale::Short => self.short,
            Scale::Long => self.long,
        }
    }
}

pub fn window_slices(t: usize, config: &ModelConfig) -> WindowTriple {
    let range = |scale| {
        let (lookback, lag) = config.extent(scale);
        WindowRange {
            start: t as i64 - lookback as i64,
            end: t as i64 - lag as i64,
        }
    };
    WindowTriple {
        recent: range(Scale::Recent),
        short: range(Scale::Short),
        long: range(Scale::Long),
    }
}
