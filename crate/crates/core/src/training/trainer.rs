use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::losses::{sample_steps, session_loss, LossParts, Targets};
use super::{adamw_step, mix_seed, AdamW, Checkpoint, OptimizerState, TrainConfig, TrainError, CHECKPOINT_FORMAT};
use crate::autodiff::Graph;
use crate::bandit::Session;
use crate::model::{bind, ModelConfig, ModelParams};
use crate::sessions::{encode_observations, ObservationMatrix};

pub const LOSS_CSV_HEADER: &str = "epoch,loss_p,loss_r_s,loss_r_l,total";

/// Mean losses over one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: LossParts,
}

impl EpochLoss {
    pub fn csv_row(&self) -> String {
        let l = &self.loss;
        format!("{},{},{},{},{}", self.epoch, l.loss_p, l.loss_r_s, l.loss_r_l, l.total)
    }
}

/// One training sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub obs: ObservationMatrix,
    pub choices: Vec<usize>,
}

impl Example {
    pub fn from_session(session: &Session) -> Result<Self, TrainError> {
        Ok(Self {
            obs: encode_observations(session)?,
            choices: session.choices.clone(),
        })
    }
}

/// A differentiable loss over a flat parameter vector and a set of
/// training items.
pub trait Objective: Sync {
    fn num_items(&self) -> usize;

    /// Mean loss over `items` and its gradient. `seed` drives any
    /// sampling inside the batch.
    fn batch(&self, params: &[f64], items: &[usize], seed: u64) -> Result<(LossParts, Vec<f64>), TrainError>;
}

/// State handed to the per-epoch callback.
pub struct EpochRecord<'a> {
    pub loss: EpochLoss,
    pub params: &'a [f64],
    pub optimizer: &'a OptimizerState,
}

/// Runs epochs `first..first + count`: shuffle, batch, step. On a
/// non-finite loss or gradient the parameters and optimizer state are
/// restored to the start of the failing epoch and `Diverged` is returned.
#[allow(clippy::too_many_arguments)]
pub fn run_epochs<O: Objective>(
    objective: &O,
    params: &mut [f64],
    state: &mut OptimizerState,
    opt: &AdamW,
    first: usize,
    count: usize,
    batch_size: usize,
    seed: u64,
    mut on_epoch: impl FnMut(EpochRecord) -> Result<(), TrainError>,
) -> Result<Vec<EpochLoss>, TrainError> {
    let n = objective.num_items();
    if n == 0 {
        return Err(TrainError::Usage("empty training set".into()));
    }
    if batch_size == 0 {
        return Err(TrainError::Config("batch size must be positive".into()));
    }
    let mut history = Vec::with_capacity(count);
    for epoch in first..first + count {
        let saved = (params.to_vec(), state.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[seed, epoch as u64])));
        let mut mean = LossParts::default();
        let mut failed = false;
        for (b, items) in order.chunks(batch_size).enumerate() {
            let (loss, grads) = objective.batch(params, items, mix_seed(&[seed, epoch as u64, b as u64]))?;
            if !loss.is_finite() || adamw_step(params, &grads, state, opt).is_err() || params.iter().any(|v| !v.is_finite()) {
                failed = true;
                break;
            }
            mean.accumulate(&loss, items.len() as f64 / n as f64);
        }
        if failed {
            params.copy_from_slice(&saved.0);
            *state = saved.1;
            return Err(TrainError::Diverged { epoch });
        }
        let record = EpochLoss { epoch, loss: mean };
        tracing::debug!(epoch, total = mean.total, "epoch done");
        history.push(record);
        on_epoch(EpochRecord {
            loss: record,
            params,
            optimizer: state,
        })?;
    }
    Ok(history)
}

/// The full model's objective over a set of sessions.
pub struct ModelObjective<'a> {
    pub model: &'a ModelConfig,
    pub train: &'a TrainConfig,
    pub examples: &'a [Example],
}

impl ModelObjective<'_> {
    fn session_gradient(&self, params: &ModelParams, item: usize, seed: u64) -> Result<(LossParts, Vec<f64>), TrainError> {
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
        let bound = bind(&mut g, params, true);
        let (loss, parts) = session_loss(
            &mut g,
            self.model,
            &bound,
            &ex.obs,
            &ex.choices,
            &sample,
            self.train.alpha,
            self.train.symmetrize,
            Targets::Live,
        )?;
        let grads = g.backward(loss)?;
        let mut flat = Vec::with_capacity(params.num_values());
        for (&var, value) in bound.items().into_iter().zip(params.items()) {
            match grads.get(var) {
                Some(t) => flat.extend_from_slice(t.data()),
                None => flat.extend(std::iter::repeat_n(0.0, value.len())),
            }
        }
        Ok((parts, flat))
    }
}

impl Objective for ModelObjective<'_> {
    fn num_items(&self) -> usize {
        self.examples.len()
    }

    fn batch(&self, flat: &[f64], items: &[usize], seed: u64) -> Result<(LossParts, Vec<f64>), TrainError> {
        let params = ModelParams::from_flat(self.model, flat)?;
        let results = items
            .par_iter()
            .enumerate()
            .map(|(slot, &item)| self.session_gradient(&params, item, mix_seed(&[seed, slot as u64])))
            .collect::<Result<Vec<_>, _>>()?;
        let w = 1.0 / items.len() as f64;
        let mut loss = LossParts::default();
        let mut grad = vec![0.0; flat.len()];
        for (parts, g) in &results {
            loss.accumulate(parts, w);
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += w * v;
            }
        }
        Ok((loss, grad))
    }
}

/// Where training artifacts go. With no directory nothing is written.
#[derive(Clone, Debug, Default)]
pub struct TrainOutput {
    pub dir: Option<PathBuf>,
}

impl TrainOutput {
    pub fn loss_csv(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("loss.csv"))
    }

    pub fn final_checkpoint(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("checkpoint.json"))
    }

    pub fn epoch_checkpoint(&self, epoch: usize) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("checkpoint-epoch{epoch:04}.json")))
    }

    pub fn last_good(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("last_good.json"))
    }
}

/// Trains a freshly initialised model on `examples`. Epochs are numbered
/// from 1. Writes the loss CSV, periodic checkpoints and the final
/// checkpoint when `output` has a directory; on divergence writes the last
/// good checkpoint instead and fails.
pub fn train(
    examples: &[Example],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    output: &TrainOutput,
) -> Result<Checkpoint, TrainError> {
    train_config.validate()?;
    model_config.validate()?;
    if examples.is_empty() {
        return Err(TrainError::Usage("no training sessions".into()));
    }
    let init = ModelParams::init(model_config, train_config.seed)?;
    let mut params = init.to_flat();
    let mut state = OptimizerState::new(params.len());
    let snapshot = |epoch: usize, history: &[EpochLoss], params: &[f64], state: &OptimizerState| Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        model_config: model_config.clone(),
        train_config: train_config.clone(),
        seed: train_config.seed,
        epoch,
        loss_history: history.to_vec(),
        params: params.to_vec(),
        optimizer: state.clone(),
    };

    if let Some(dir) = &output.dir {
        fs::create_dir_all(dir)?;
    }
    let mut csv = match output.loss_csv() {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "{LOSS_CSV_HEADER}")?;
            Some(w)
        }
        None => None,
    };
    let objective = ModelObjective {
        model: model_config,
        train: train_config,
        examples,
    };
    let mut history: Vec<EpochLoss> = Vec::new();
    let result = run_epochs(
        &objective,
        &mut params,
        &mut state,
        &train_config.optimizer(),
        1,
        train_config.epochs,
        train_config.batch_sessions,
        train_config.seed,
        |rec| {
            history.push(rec.loss);
            if let Some(w) = csv.as_mut() {
                writeln!(w, "{}", rec.loss.csv_row())?;
                w.flush()?;
            }
            let k = train_config.checkpoint_every;
            if k > 0 && rec.loss.epoch % k == 0 && rec.loss.epoch < train_config.epochs {
                if let Some(path) = output.epoch_checkpoint(rec.loss.epoch) {
                    snapshot(rec.loss.epoch, &history, rec.params, rec.optimizer).save(&path)?;
                }
            }
            Ok(())
        },
    );
    match result {
        Ok(_) => {
            let ck = snapshot(train_config.epochs, &history, &params, &state);
            if let Some(path) = output.final_checkpoint() {
                ck.save(&path)?;
            }
            Ok(ck)
        }
        Err(TrainError::Diverged { epoch }) => {
            tracing::error!(epoch, "training diverged; keeping the last good parameters");
            if let Some(path) = output.last_good() {
                snapshot(epoch - 1, &history, &params, &state).save(&path)?;
            }
            Err(TrainError::Diverged { epoch })
        }
        Err(e) => Err(e),
    }
}
