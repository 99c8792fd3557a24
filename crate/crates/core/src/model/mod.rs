//! Three-encoder multi-timescale architecture.
//!
//! The recent-past, short-term and long-term encoders each read a fixed
//! window of past trials; their embeddings are concatenated into `z`, from
//! which a linear classifier predicts the next choice. Short and long
//! embeddings also feed small predictors used by the latent losses.

mod config;
mod forward;
mod params;
mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{EncoderSet, ModelConfig, Scale};
pub use forward::{bind, encode_window, encoder_forward, predictor_forward, SequenceEmbeddings};
pub use params::{param_shapes, ConvLayer, Dense, Encoder, ModelParams, Predictor};
pub use window::{window_slices, WindowRange, WindowTriple};

use crate::autodiff::{AutodiffError, Graph, Tensor};
use crate::bandit::ARMS;
use crate::sessions::ObservationMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Per-scale embeddings at one step. `z_s` and `z_l` are empty for a
/// recent-only model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTriple {
    pub z_rp: Vec<f64>,
    pub z_s: Vec<f64>,
    pub z_l: Vec<f64>,
}

impl EmbeddingTriple {
    /// `z = concat[z_rp, z_s, z_l]`.
    pub fn z(&self) -> Vec<f64> {
        [self.z_rp.as_slice(), &self.z_s, &self.z_l].concat()
    }

    pub fn get(&self, scale: Scale) -> &[f64] {
        match scale {
            Scale::Recent => &self.z_rp,
            Scale::Short => &self.z_s,
            Scale::Long => &self.z_l,
        }
    }
}

/// A configuration with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let params = ModelParams::init(&config, seed)?;
        Ok(Self { config, params })
    }

    /// Embedding at step `t`, each encoder handed exactly its window.
    pub fn embed(&self, obs: &ObservationMatrix, t: usize) -> Result<EmbeddingTriple, ModelError> {
        let windows = window_slices(t, &self.config);
        let mut g = Graph::new();
        let bound = bind(&mut g, &self.params, false);
        let mut out = EmbeddingTriple {
            z_rp: vec![],
            z_s: vec![],
            z_l: vec![],
        };
        for &scale in self.config.scales() {
            let (frames, mask) = windows.get(scale).frames(obs);
            let v = encode_window(&mut g, &self.config, &bound, scale, &frames, &mask)?;
            let z = g.value(v).data().to_vec();
            match scale {
                Scale::Recent => out.z_rp = z,
                Scale::Short => out.z_s = z,
                Scale::Long => out.z_l = z,
            }
        }
        Ok(out)
    }

    /// Embeddings at every step of `obs`, computed in one pass per encoder.
    pub fn embed_all(&self, obs: &ObservationMatrix) -> Result<Vec<EmbeddingTriple>, ModelError> {
        let mut g = Graph::new();
        let bound = bind(&mut g, &self.params, false);
        let seq = SequenceEmbeddings::build(&mut g, &self.config, &bound, obs)?;
        let steps: Vec<usize> = (0..obs.len()).collect();
        let mut per_scale: Vec<(Scale, Tensor)> = Vec::new();
        for &scale in self.config.scales() {
            let v = seq.select(&mut g, scale, &steps)?;
            per_scale.push((scale, g.value(v).clone()));
        }
        Ok(steps
            .iter()
            .map(|&t| {
                let col = |scale| {
                    per_scale
                        .iter()
                        .find(|(s, _)| *s == scale)
                        .map(|(_, m)| m.column(t))
                        .unwrap_or_default()
                };
                EmbeddingTriple {
                    z_rp: col(Scale::Recent),
                    z_s: col(Scale::Short),
                    z_l: col(Scale::Long),
                }
            })
            .collect())
    }

    /// Next-choice distribution at every step of `obs`: entry `t`
    /// predicts the choice at `t + 1`.
    pub fn predict_all(&self, obs: &ObservationMatrix) -> Result<Vec<[f64; ARMS]>, ModelError> {
        self.embed_all(obs)?
            .iter()
            .map(|e| predict_next(&e.z(), &self.params))
            .collect()
    }

    pub fn predict_next(&self, z: &[f64]) -> Result<[f64; ARMS], ModelError> {
        predict_next(z, &self.params)
    }

    pub fn project(&self, z_scale: &[f64], which: Scale) -> Result<Vec<f64>, ModelError> {
        project(z_scale, which, &self.params)
    }
}

/// `softmax(g(z))`.
pub fn predict_next(z: &[f64], params: &ModelParams) -> Result<[f64; ARMS], ModelError> {
    if z.is_empty() || z.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Numeric("embedding must be finite and non-empty".into()));
    }
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(z.to_vec()));
    let w = g.constant(params.classifier.weight.clone());
    let b = g.constant(params.classifier.bias.clone());
    let logits = g.linear(x, w, b)?;
    Ok(softmax(g.value(logits).data()))
}

/// Max-subtracted softmax over the three arm logits.
pub fn softmax(logits: &[f64]) -> [f64; ARMS] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; ARMS];
    for (pi, l) in p.iter_mut().zip(logits) {
        *pi = (l - max).exp();
    }
    let z: f64 = p.iter().sum();
    p.map(|v| v / z)
}

/// Predictor output `q(z)` for the short or long scale.
pub fn project(z_scale: &[f64], which: Scale, params: &ModelParams) -> Result<Vec<f64>, ModelError> {
    let pred = params
        .predictor(which)
        .ok_or_else(|| ModelError::Usage(format!("no predictor for {which:?}")))?;
    let expected = pred.hidden_weight.shape()[1];
    if z_scale.len() != expected {
        return Err(ModelError::Usage(format!(
            "{which:?} predictor takes {expected} values, got {}",
            z_scale.len()
        )));
    }
    let mut g = Graph::new();
    let bound = params.map(|t| g.constant(t.clone()));
    let x = g.constant(Tensor::vector(z_scale.to_vec()));
    let out = predictor_forward(&mut g, bound.predictor(which).expect("checked"), x)?;
    Ok(g.value(out).data().to_vec())
}

#[cfg(test)]
mod tests;
