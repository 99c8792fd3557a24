//! End-to-end steps shared by the command line and the acceptance suite:
//! preparing training data, applying ablations, training and evaluating.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bandit::Session;
use crate::eval::{
    accuracy, equivariance_gap, style_probe, subspace_report, train_mlp, AccuracyResult, ChoicePredictor, EvalError,
    EvalReport, MlpBaseline, MlpConfig, SessionSummary, StyleReport, CHANCE, PROBE_MIN_ROWS,
};
use crate::model::{EncoderSet, Model, ModelConfig};
use crate::sessions::augment_all;
use crate::training::{train, Checkpoint, Example, TrainConfig, TrainError, TrainOutput};

/// Model variants compared in the accuracy table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoContrastive,
    NoPermutation,
    RecentOnly,
    MlpBaseline,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoContrastive,
        Variant::NoPermutation,
        Variant::RecentOnly,
        Variant::MlpBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoContrastive => "no-contrastive",
            Variant::NoPermutation => "no-permutation",
            Variant::RecentOnly => "recent-only",
            Variant::MlpBaseline => "mlp-baseline",
        }
    }

    /// Whether training sessions are expanded with every arm relabelling.
    pub fn augments(self) -> bool {
        self != Variant::NoPermutation
    }

    /// Configurations for this variant derived from the full model's.
    pub fn configs(self, model: &ModelConfig, train: &TrainConfig) -> (ModelConfig, TrainConfig) {
        let (mut m, mut t) = (model.clone(), train.clone());
        match self {
            Variant::NoContrastive => t.alpha = 0.0,
            Variant::RecentOnly => m.encoders = EncoderSet::RecentOnly,
            _ => {}
        }
        (m, t)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant {s:?}; expected one of full, no-contrastive, no-permutation, recent-only, mlp-baseline"))
    }
}

/// Training examples for `variant`: the first `limit` sessions (all when
/// `None`), relabelled six ways unless the variant skips augmentation.
pub fn training_examples(train_sessions: &[Session], variant: Variant, limit: Option<usize>) -> Result<Vec<Example>, TrainError> {
    let n = limit.unwrap_or(train_sessions.len()).min(train_sessions.len());
    let chosen = &train_sessions[..n];
    let sessions = if variant.augments() {
        augment_all(chosen)
    } else {
        chosen.to_vec()
    };
    sessions.iter().map(Example::from_session).collect()
}

pub fn examples(sessions: &[Session]) -> Result<Vec<Example>, TrainError> {
    sessions.iter().map(Example::from_session).collect()
}

/// A trained variant.
#[derive(Clone, Debug)]
pub enum Trained {
    Model(Box<Checkpoint>),
    Mlp(MlpBaseline),
}

impl Trained {
    pub fn predictor(&self) -> Result<Box<dyn ChoicePredictor>, TrainError> {
        Ok(match self {
            Trained::Model(ck) => Box::new(ck.model()?),
            Trained::Mlp(m) => Box::new(m.clone()),
        })
    }
}

/// Trains `variant` on already prepared examples.
pub fn train_variant(
    variant: Variant,
    examples: &[Example],
    model: &ModelConfig,
    train_config: &TrainConfig,
    output: &TrainOutput,
) -> Result<Trained, TrainError> {
    let (m, t) = variant.configs(model, train_config);
    Ok(match variant {
        Variant::MlpBaseline => Trained::Mlp(train_mlp(examples, &MlpConfig::default(), &t)?),
        _ => Trained::Model(Box::new(train(examples, &m, &t, output)?)),
    })
}

/// Which parts of the report to compute beyond accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    pub subspaces: bool,
    pub style: bool,
    pub equivariance: bool,
    pub summary: SessionSummary,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            subspaces: true,
            style: true,
            equivariance: true,
            summary: SessionSummary::Final,
        }
    }
}

/// Accuracy of any predictor on the test sessions.
pub fn test_accuracy(predictor: &dyn ChoicePredictor, test: &[Session]) -> Result<AccuracyResult, EvalError> {
    let ex = examples(test).map_err(|e| EvalError::Usage(e.to_string()))?;
    accuracy(predictor, &ex)
}

/// Full report for a trained model. The style control is the same
/// architecture at its initial parameters (`init_seed`).
pub fn evaluate_model(
    name: &str,
    model: &Model,
    init_seed: u64,
    test: &[Session],
    seed: u64,
    options: EvalOptions,
) -> Result<EvalReport, EvalError> {
    let ex = examples(test).map_err(|e| EvalError::Usage(e.to_string()))?;
    let acc = accuracy(model, &ex)?;
    let subspaces = if options.subspaces {
        subspace_report(model, &ex, seed)?
    } else {
        Vec::new()
    };
    let has_families = test.iter().all(|s| s.provenance.family().is_some());
    let enough = test.len() >= PROBE_MIN_ROWS;
    if options.style && !enough {
        tracing::warn!(sessions = test.len(), "too few test sessions for the style probe; skipping it");
    }
    let style = if options.style && enough && has_families && model.config.has(crate::model::Scale::Long) {
        let control = Model::init(model.config.clone(), init_seed)?;
        Some(StyleReport {
            summary: options.summary,
            trained: style_probe(model, test, options.summary, seed)?,
            control: style_probe(&control, test, options.summary, seed)?,
            chance: 1.0 / crate::bandit::AgentFamily::ALL.len() as f64,
        })
    } else {
        None
    };
    let equivariance_tv = if options.equivariance {
        Some(equivariance_gap(model, test)?)
    } else {
        None
    };
    Ok(EvalReport {
        model: name.into(),
        seed,
        test_sessions: test.len(),
        chance: CHANCE,
        accuracy: acc,
        subspaces,
        style,
        equivariance_tv,
    })
}

/// Accuracy-only report, used for the baseline.
pub fn evaluate_predictor(name: &str, predictor: &dyn ChoicePredictor, test: &[Session], seed: u64) -> Result<EvalReport, EvalError> {
    Ok(EvalReport {
        model: name.into(),
        seed,
        test_sessions: test.len(),
        chance: CHANCE,
        accuracy: test_accuracy(predictor, test)?,
        subspaces: Vec::new(),
        style: None,
        equivariance_tv: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{simulate_population, PopulationSpec};

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn variant_configs() {
        let (m, t) = (ModelConfig::default(), TrainConfig::default());
        assert_eq!(Variant::NoContrastive.configs(&m, &t).1.alpha, 0.0);
        assert_eq!(Variant::RecentOnly.configs(&m, &t).0.encoders, EncoderSet::RecentOnly);
        assert_eq!(Variant::Full.configs(&m, &t), (m.clone(), t.clone()));
        assert_eq!(Variant::NoPermutation.configs(&m, &t), (m, t));
    }

    #[test]
    fn augmentation_follows_variant() {
        let mut spec = PopulationSpec::balanced(2);
        spec.trials = 30;
        let sessions = simulate_population(&spec, 1).unwrap();
        assert_eq!(training_examples(&sessions, Variant::Full, Some(4)).unwrap().len(), 24);
        assert_eq!(training_examples(&sessions, Variant::NoPermutation, Some(4)).unwrap().len(), 4);
        assert_eq!(training_examples(&sessions, Variant::MlpBaseline, None).unwrap().len(), 60);
    }
}
