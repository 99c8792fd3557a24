//! Feed-forward next-choice baseline over the last few observations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ChoicePredictor, EvalError};
use crate::autodiff::{Graph, Tensor, Var};
use crate::bandit::ARMS;
use crate::model::softmax;
use crate::sessions::{ObservationMatrix, FEATURES};
use crate::training::{
    mix_seed, run_epochs, sample_steps, EpochLoss, Example, LossParts, Objective, OptimizerState, TrainConfig,
    TrainError,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Observations fed to the network, ending at the current step.
    pub window: usize,
    pub hidden: Vec<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            window: 20,
            hidden: vec![64, 64],
        }
    }
}

impl MlpConfig {
    pub fn input_dim(&self) -> usize {
        self.window * FEATURES
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        let mut dims = vec![self.input_dim()];
        dims.extend(&self.hidden);
        dims.push(ARMS);
        dims.windows(2).flat_map(|w| [vec![w[1], w[0]], vec![w[1]]]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpBaseline {
    pub config: MlpConfig,
    /// Weight and bias per layer, flattened in order.
    pub params: Vec<f64>,
    pub loss_history: Vec<EpochLoss>,
}

/// `[window·features × steps.len()]` inputs; frame `j` of the window for
/// step `t` is step `t − window + 1 + j`, zero before the session start.
fn features(obs: &ObservationMatrix, steps: &[usize], window: usize) -> Tensor {
    let rows = window * FEATURES;
    let cols = steps.len();
    let mut data = vec![0.0; rows * cols];
    for (c, &t) in steps.iter().enumerate() {
        for j in 0..window {
            let Some(step) = (t + 1 + j).checked_sub(window) else {
                continue;
            };
            for f in 0..FEATURES {
                data[(j * FEATURES + f) * cols + c] = obs.rows()[step][f];
            }
        }
    }
    Tensor::matrix(rows, cols, data).expect("non-empty")
}

fn unflatten(config: &MlpConfig, flat: &[f64]) -> Result<Vec<Tensor>, EvalError> {
    let shapes = config.shapes();
    let expected: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if flat.len() != expected {
        return Err(EvalError::Usage(format!("baseline needs {expected} parameters, got {}", flat.len())));
    }
    let mut offset = 0;
    Ok(shapes
        .into_iter()
        .map(|shape| {
            let n: usize = shape.iter().product();
            let t = Tensor::new(shape, flat[offset..offset + n].to_vec()).expect("valid shape");
            offset += n;
            t
        })
        .collect())
}

fn forward(g: &mut Graph, layers: &[Var], input: Var) -> Result<Var, EvalError> {
    let mut h = input;
    let pairs: Vec<&[Var]> = layers.chunks(2).collect();
    for (i, pair) in pairs.iter().enumerate() {
        h = g.linear(h, pair[0], pair[1])?;
        if i + 1 < pairs.len() {
            h = g.relu(h);
        }
    }
    Ok(h)
}

fn init(config: &MlpConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut fan_in = 1;
    for shape in config.shapes() {
        if shape.len() == 2 {
            fan_in = shape[1];
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        out.extend((0..n).map(|_| rng.random_range(-bound..bound)));
    }
    out
}

struct MlpObjective<'a> {
    config: &'a MlpConfig,
    train: &'a TrainConfig,
    examples: &'a [Example],
}

impl MlpObjective<'_> {
    fn session(&self, params: &[Tensor], item: usize, seed: u64) -> Result<(f64, Vec<f64>), TrainError> {
        let ex = &self.examples[item];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = sample_steps(
            ex.obs.len(),
            self.train.timesteps_per_session,
            self.train.delta_short,
            self.train.delta_long,
            &mut rng,
        )?;
        let mut g = Graph::new();
        let vars: Vec<Var> = params.iter().map(|t| g.param(t.clone())).collect();
        let x = g.constant(features(&ex.obs, &sample.steps, self.config.window));
        let logits = forward(&mut g, &vars, x).map_err(|e| TrainError::Usage(e.to_string()))?;
        let next: Vec<usize> = sample.steps.iter().map(|&t| ex.choices[t + 1]).collect();
        let loss = g.softmax_cross_entropy(logits, &next)?;
        let grads = g.backward(loss)?;
        let flat = vars
            .iter()
            .zip(params)
            .flat_map(|(&v, t)| grads.get_or_zeros(v, t).into_data())
            .collect();
        Ok((g.value(loss).data()[0], flat))
    }
}

impl Objective for MlpObjective<'_> {
    fn num_items(&self) -> usize {
        self.examples.len()
    }

    fn batch(&self, flat: &[f64], items: &[usize], seed: u64) -> Result<(LossParts, Vec<f64>), TrainError> {
        let params = unflatten(self.config, flat).map_err(|e| TrainError::Usage(e.to_string()))?;
        let results = items
            .par_iter()
            .enumerate()
            .map(|(slot, &item)| self.session(&params, item, mix_seed(&[seed, slot as u64])))
            .collect::<Result<Vec<_>, _>>()?;
        let w = 1.0 / items.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; flat.len()];
        for (l, g) in &results {
            loss += w * l;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += w * v;
            }
        }
        Ok((
            LossParts {
                loss_p: loss,
                total: loss,
                ..LossParts::default()
            },
            grad,
        ))
    }
}

/// Trains the baseline with the optimizer, batching and epoch count of
/// `train`, on the action loss alone.
pub fn train_mlp(examples: &[Example], config: &MlpConfig, train: &TrainConfig) -> Result<MlpBaseline, TrainError> {
    train.validate()?;
    if config.window == 0 || config.hidden.contains(&0) {
        return Err(TrainError::Config("baseline window and widths must be positive".into()));
    }
    let mut params = init(config, train.seed);
    let mut state = OptimizerState::new(params.len());
    let objective = MlpObjective {
        config,
        train,
        examples,
    };
    let history = run_epochs(
        &objective,
        &mut params,
        &mut state,
        &train.optimizer(),
        1,
        train.epochs,
        train.batch_sessions,
        train.seed,
        |_| Ok(()),
    )?;
    Ok(MlpBaseline {
        config: config.clone(),
        params,
        loss_history: history,
    })
}

impl ChoicePredictor for MlpBaseline {
    fn predict_session(&self, obs: &ObservationMatrix) -> Result<Vec<[f64; ARMS]>, EvalError> {
        let params = unflatten(&self.config, &self.params)?;
        let steps: Vec<usize> = (0..obs.len()).collect();
        let mut g = Graph::new();
        let vars: Vec<Var> = params.into_iter().map(|t| g.constant(t)).collect();
        let x = g.constant(features(obs, &steps, self.config.window));
        let logits = forward(&mut g, &vars, x)?;
        let logits = g.value(logits);
        Ok((0..steps.len()).map(|c| softmax(&logits.column(c))).collect())
    }
}
