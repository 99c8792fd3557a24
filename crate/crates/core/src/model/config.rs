use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::bandit::ARMS;

/// The three encoder timescales.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Recent,
    Short,
    Long,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::Recent, Scale::Short, Scale::Long];
}

/// Which encoders the model carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderSet {
    #[default]
    Full,
    RecentOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub arms: usize,
    /// Recent-past encoder sees `[t − recent_window, t]`.
    pub recent_window: usize,
    /// Short-term encoder sees `[t − short_window, t − recent_window + 1]`.
    pub short_window: usize,
    /// Long-term encoder sees `[t − long_window, t − short_window + long_end_offset]`.
    pub long_window: usize,
    pub long_end_offset: usize,
    pub recent_dim: usize,
    pub short_dim: usize,
    pub long_dim: usize,
    pub channels: usize,
    pub kernel: usize,
    pub predictor_hidden: usize,
    pub encoders: EncoderSet,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arms: ARMS,
            recent_window: 3,
            short_window: 20,
            long_window: 100,
            long_end_offset: 10,
            recent_dim: 8,
            short_dim: 16,
            long_dim: 16,
            channels: 32,
            kernel: 2,
            predictor_hidden: 32,
            encoders: EncoderSet::Full,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.arms != ARMS {
            return fail(format!("only {ARMS}-armed tasks are supported, got {}", self.arms));
        }
        if !(0 < self.recent_window && self.recent_window < self.short_window && self.short_window < self.long_window) {
            return fail(format!(
                "windows must satisfy 0 < recent < short < long, got {}/{}/{}",
                self.recent_window, self.short_window, self.long_window
            ));
        }
        if self.long_end_offset >= self.short_window {
            return fail(format!(
                "long_end_offset {} would let the long window reach step t",
                self.long_end_offset
            ));
        }
        if self.kernel < 2 {
            return fail("kernel size must be ≥ 2".into());
        }
        if [self.recent_dim, self.short_dim, self.long_dim, self.channels, self.predictor_hidden].contains(&0) {
            return fail("dimensions must be positive".into());
        }
        for &scale in self.scales() {
            let span = self.window_len(scale) - 1;
            if span % (self.kernel - 1) != 0 {
                return fail(format!(
                    "{scale:?} window of {} frames cannot be covered exactly with kernel {}",
                    self.window_len(scale),
                    self.kernel
                ));
            }
        }
        Ok(())
    }

    /// Scales present in this configuration, in concatenation order.
    pub fn scales(&self) -> &'static [Scale] {
        match self.encoders {
            EncoderSet::Full => &Scale::ALL,
            EncoderSet::RecentOnly => &[Scale::Recent],
        }
    }

    pub fn has(&self, scale: Scale) -> bool {
        self.scales().contains(&scale)
    }

    /// `(lookback, lag)`: the window at step `t` is `[t − lookback, t − lag]`.
    pub fn extent(&self, scale: Scale) -> (usize, usize) {
        match scale {
            Scale::Recent => (self.recent_window, 0),
            Scale::Short => (self.short_window, self.recent_window - 1),
            Scale::Long => (self.long_window, self.short_window - self.long_end_offset),
        }
    }

    pub fn window_len(&self, scale: Scale) -> usize {
        let (lookback, lag) = self.extent(scale);
        lookback - lag + 1
    }

    pub fn dim(&self, scale: Scale) -> usize {
        match scale {
            Scale::Recent => self.recent_dim,
            Scale::Short => self.short_dim,
            Scale::Long => self.long_dim,
        }
    }

    /// Width of the concatenated embedding.
    pub fn embedding_dim(&self) -> usize {
        self.scales().iter().map(|&s| self.dim(s)).sum()
    }

    /// Dilation schedule whose receptive field equals the window exactly:
    /// doubling dilations, with the last one truncated to the remainder.
    pub fn dilations(&self, scale: Scale) -> Vec<usize> {
        let mut remaining = (self.window_len(scale) - 1) / (self.kernel - 1);
        let mut out = Vec::new();
        let mut d = 1;
        while remaining > 0 {
            let step = d.min(remaining);
            out.push(step);
            remaining -= step;
            d *= 2;
        }
        out
    }

    /// `true` when neither the short nor the long window includes step
    /// `t − 1` or `t`.
    pub fn masks_recent_past(&self) -> bool {
        self.extent(Scale::Short).1 >= 2 && self.extent(Scale::Long).1 >= 2
    }
}
