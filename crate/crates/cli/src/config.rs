//! Layered run configuration: built-in defaults, then a TOML file (or the
//! `config` block of an earlier run's manifest), then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use multiscale_core::bandit::TRIALS;
use multiscale_core::eval::SessionSummary;
use multiscale_core::model::ModelConfig;
use multiscale_core::pipeline::Variant;
use multiscale_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Sessions JSONL read by train, evaluate, embed and serve.
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub simulate: SimulateSettings,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSettings,
    pub evaluate: EvaluateSettings,
    pub embed: EmbedSettings,
    pub serve: ServeSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("."),
            threads: 0,
            data: None,
            checkpoint: None,
            simulate: SimulateSettings::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: SplitSettings::default(),
            evaluate: EvaluateSettings::default(),
            embed: EmbedSettings::default(),
            serve: ServeSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub n_per_family: usize,
    pub trials: usize,
    /// Drop sessions below the 42% reward rate.
    pub screen: bool,
    pub out: PathBuf,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            n_per_family: 200,
            trials: TRIALS,
            screen: false,
            out: PathBuf::from("sessions.jsonl"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub test_fraction: f64,
    /// Use only the first `train_limit` training sessions (before
    /// augmentation).
    pub train_limit: Option<usize>,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            train_limit: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub ablate: Option<Variant>,
    pub summary: SessionSummary,
    /// Split file written by `train`; defaults to `split.json` next to the
    /// checkpoint.
    pub split_file: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSettings {
    pub summary: SessionSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSettings {
    pub host: String,
    pub port: u16,
    pub trials: usize,
    /// Directory holding `embeddings.json` and `embeddings.bin`.
    pub export_dir: Option<PathBuf>,
    pub human_out: PathBuf,
}

impl Default for ServeSettings {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: multiscale_service::DEFAULT_PORT,
            trials: TRIALS,
            export_dir: None,
            human_out: PathBuf::from("human_sessions.jsonl"),
        }
    }
}

impl RunConfig {
    /// Reads a TOML config, or a run manifest whose `config` block is
    /// taken verbatim.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            let mut value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
            serde_json::from_value(value).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
        };
        Ok(parsed)
    }

    /// Resolves a relative output name against `out_dir`.
    pub fn output(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn require_data(&self) -> Result<&Path, UsageError> {
        self.data.as_deref().ok_or_else(|| UsageError("--data is required".into()))
    }

    pub fn require_checkpoint(&self) -> Result<&Path, UsageError> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| UsageError("--checkpoint is required".into()))
    }
}
