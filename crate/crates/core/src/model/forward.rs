//! Graph construction for the encoders and heads.
//!
//! Two routes compute the same embeddings. [`encode_window`] hands an
//! encoder exactly one sliced window. [`SequenceEmbeddings::build`] runs
//! each encoder once over the whole left-padded history; since every
//! encoder's receptive field equals its window length, the output column
//! for step `t` depends on exactly the frames of that window.

use super::{Encoder, ModelConfig, ModelError, ModelParams, Predictor, Scale};
use crate::autodiff::{Graph, Tensor, Var};
use crate::sessions::{ObservationMatrix, FEATURES};

/// Adds every parameter array to the graph as a leaf.
pub fn bind(g: &mut Graph, params: &ModelParams, trainable: bool) -> ModelParams<Var> {
    params.map(|t| g.leaf(t.clone(), trainable))
}

/// TCN stack plus linear head over `input` (`[features × len]`); returns
/// `[dim × len]`.
pub fn encoder_forward(g: &mut Graph, enc: &Encoder<Var>, dilations: &[usize], input: Var) -> Result<Var, ModelError> {
    let mut h = input;
    for (layer, &d) in enc.layers.iter().zip(dilations) {
        h = g.causal_conv1d(h, layer.kernel, d)?;
        h = g.add_bias(h, layer.bias)?;
        h = g.relu(h);
    }
    Ok(g.linear(h, enc.head_weight, enc.head_bias)?)
}

pub fn predictor_forward(g: &mut Graph, pred: &Predictor<Var>, x: Var) -> Result<Var, ModelError> {
    let h = g.linear(x, pred.hidden_weight, pred.hidden_bias)?;
    let h = g.relu(h);
    Ok(g.linear(h, pred.out_weight, pred.out_bias)?)
}

/// Embedding of one sliced window; masked frames are zeroed first.
pub fn encode_window(
    g: &mut Graph,
    config: &ModelConfig,
    params: &ModelParams<Var>,
    scale: Scale,
    frames: &Tensor,
    mask: &[bool],
) -> Result<Var, ModelError> {
    let enc = params
        .encoder(scale)
        .ok_or_else(|| ModelError::Usage(format!("model has no {scale:?} encoder")))?;
    let (features, len) = frames.dims2();
    if features != FEATURES || len != config.window_len(scale) || mask.len() != len {
        return Err(ModelError::Usage(format!(
            "{scale:?} window must be {FEATURES} × {}, got {features} × {len}",
            config.window_len(scale)
        )));
    }
    let mut data = frames.data().to_vec();
    for f in 0..FEATURES {
        for (j, &valid) in mask.iter().enumerate() {
            if !valid {
                data[f * len + j] = 0.0;
            }
        }
    }
    let input = g.constant(Tensor::matrix(FEATURES, len, data)?);
    let out = encoder_forward(g, enc, &config.dilations(scale), input)?;
    let last = g.select_columns(out, &[len - 1])?;
    Ok(last)
}

/// Per-scale embeddings for every step of a history, as `[dim × cols]`
/// matrices.
#[derive(Clone, Debug)]
pub struct SequenceEmbeddings {
    outputs: Vec<(Scale, Var, usize)>,
    steps: usize,
}

impl SequenceEmbeddings {
    pub fn build(
        g: &mut Graph,
        config: &ModelConfig,
        params: &ModelParams<Var>,
        obs: &ObservationMatrix,
    ) -> Result<Self, ModelError> {
        Self::build_scales(g, config, params, obs, config.scales())
    }

    /// Like [`SequenceEmbeddings::build`] but only for `scales`.
    pub fn build_scales(
        g: &mut Graph,
        config: &ModelConfig,
        params: &ModelParams<Var>,
        obs: &ObservationMatrix,
        scales: &[Scale],
    ) -> Result<Self, ModelError> {
        let steps = obs.len();
        if steps == 0 {
            return Err(ModelError::Usage("empty history".into()));
        }
        let mut outputs = Vec::with_capacity(scales.len());
        for &scale in scales {
            let enc = params
                .encoder(scale)
                .ok_or_else(|| ModelError::Usage(format!("model has no {scale:?} encoder")))?;
            let (lookback, lag) = config.extent(scale);
            // column j holds step j − lookback; steps ≥ T − lag are never read
            let cols = lookback + steps - lag.min(steps);
            let cols = cols.max(lookback - lag + 1);
            let mut data = vec![0.0; FEATURES * cols];
            for (t, row) in obs.rows().iter().enumerate() {
                let j = t + lookback;
                if j >= cols {
                    break;
                }
                for f in 0..FEATURES {
                    data[f * cols + j] = row[f];
                }
            }
            let input = g.constant(Tensor::matrix(FEATURES, cols, data)?);
            let out = encoder_forward(g, enc, &config.dilations(scale), input)?;
            outputs.push((scale, out, lookback - lag));
        }
        Ok(Self { outputs, steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn entry(&self, scale: Scale) -> Result<(Var, usize), ModelError> {
        self.outputs
            .iter()
            .find(|(s, _, _)| *s == scale)
            .map(|&(_, v, off)| (v, off))
            .ok_or_else(|| ModelError::Usage(format!("{scale:?} embeddings were not built")))
    }

    /// `[dim × steps.len()]` embeddings of `scale` at the given steps.
    pub fn select(&self, g: &mut Graph, scale: Scale, steps: &[usize]) -> Result<Var, ModelError> {
        let (var, offset) = self.entry(scale)?;
        if let Some(&bad) = steps.iter().find(|&&t| t >= self.steps) {
            return Err(ModelError::Usage(format!("step {bad} beyond history of {}", self.steps)));
        }
        let cols: Vec<usize> = steps.iter().map(|t| t + offset).collect();
        Ok(g.select_columns(var, &cols)?)
    }

    /// Concatenated embedding `z` (recent, short, long) at the given steps.
    pub fn concat(&self, g: &mut Graph, steps: &[usize]) -> Result<Var, ModelError> {
        let parts = self
            .outputs
            .iter()
            .map(|&(scale, _, _)| self.select(g, scale, steps))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(g.concat_rows(&parts)?)
    }
}
