use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::{AutodiffError, Graph, Tensor, Var};
use crate::model::{bind, predictor_forward, Dense, ModelConfig, ModelParams, Predictor, Scale, SequenceEmbeddings};
use crate::sessions::ObservationMatrix;

/// Per-term loss values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub loss_p: f64,
    pub loss_r_s: f64,
    pub loss_r_l: f64,
    pub total: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        [self.loss_p, self.loss_r_s, self.loss_r_l, self.total].iter().all(|v| v.is_finite())
    }

    pub(crate) fn accumulate(&mut self, other: &LossParts, weight: f64) {
        self.loss_p += weight * other.loss_p;
        self.loss_r_s += weight * other.loss_r_s;
        self.loss_r_l += weight * other.loss_r_l;
        self.total += weight * other.total;
    }
}

/// Timesteps drawn from one session for one update, with the target
/// step of each latent loss.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionSample {
    pub steps: Vec<usize>,
    pub short_targets: Vec<usize>,
    pub long_targets: Vec<usize>,
}

impl SessionSample {
    pub fn targets(&self, scale: Scale) -> &[usize] {
        match scale {
            Scale::Short => &self.short_targets,
            Scale::Long => &self.long_targets,
            Scale::Recent => &[],
        }
    }
}

/// Draws up to `count` distinct steps that have a next choice, and for each
/// a target `t + δ` with `δ` uniform over the in-session offsets in
/// `±{1..Δ}`.
pub fn sample_steps<R: Rng>(
    len: usize,
    count: usize,
    delta_short: usize,
    delta_long: usize,
    rng: &mut R,
) -> Result<SessionSample, TrainError> {
    if len < 2 {
        return Err(TrainError::Usage(format!("session of {len} trials has no prediction target")));
    }
    let mut steps = index::sample(rng, len - 1, count.min(len - 1)).into_vec();
    steps.sort_unstable();
    let mut offset = |t: usize, delta: usize| {
        let below = delta.min(t);
        let above = delta.min(len - 1 - t);
        let k = rng.random_range(0..below + above);
        if k < below {
            t - (k + 1)
        } else {
            t + (k - below + 1)
        }
    };
    let short_targets = steps.iter().map(|&t| offset(t, delta_short)).collect();
    let long_targets = steps.iter().map(|&t| offset(t, delta_long)).collect();
    Ok(SessionSample {
        steps,
        short_targets,
        long_targets,
    })
}

/// Mean over columns of `‖q(online)/‖q(online)‖ − sg(target/‖target‖)‖²`.
pub fn latent_loss(g: &mut Graph, online: Var, target: Var, predictor: &Predictor<Var>) -> Result<Var, TrainError> {
    let n = g.value(online).dims2().1;
    let q = predictor_forward(g, predictor, online)?;
    let q = g.l2_normalize(q)?;
    let t = g.l2_normalize(target)?;
    let t = g.stop_gradient(t);
    let diff = g.sub(q, t)?;
    let s = g.sum_squares(diff);
    Ok(g.scale(s, 1.0 / n as f64))
}

/// Mean cross-entropy of `g(z)` against the next choices.
pub fn action_loss(g: &mut Graph, z: Var, next_choices: &[usize], classifier: &Dense<Var>) -> Result<Var, TrainError> {
    let logits = g.linear(z, classifier.weight, classifier.bias)?;
    Ok(g.softmax_cross_entropy(logits, next_choices)?)
}

/// Where latent targets come from.
#[derive(Clone, Copy, Debug)]
pub enum Targets<'a> {
    /// Embeddings computed in the same pass as the online branch.
    Live,
    /// Precomputed target embeddings, `[dim × steps]` per scale.
    Fixed(&'a [(Scale, Tensor)]),
}

/// Target embeddings for `sample` under `params`, as constants.
pub fn latent_targets(
    config: &ModelConfig,
    params: &ModelParams,
    obs: &ObservationMatrix,
    sample: &SessionSample,
) -> Result<Vec<(Scale, Tensor)>, TrainError> {
    let mut g = Graph::new();
    let bound = bind(&mut g, params, false);
    let scales: Vec<Scale> = [Scale::Short, Scale::Long].into_iter().filter(|&s| config.has(s)).collect();
    let seq = SequenceEmbeddings::build_scales(&mut g, config, &bound, obs, &scales)?;
    scales
        .into_iter()
        .map(|s| {
            let v = seq.select(&mut g, s, sample.targets(s))?;
            Ok((s, g.value(v).clone()))
        })
        .collect()
}

/// Latent loss over the sampled columns, dropping columns whose norm is
/// degenerate. `None` when every column was dropped.
fn filtered_latent_loss(
    g: &mut Graph,
    online: Var,
    target: Var,
    predictor: &Predictor<Var>,
    scale: Scale,
) -> Result<Option<Var>, TrainError> {
    let mut keep: Vec<usize> = (0..g.value(online).dims2().1).collect();
    let (mut on, mut tg) = (online, target);
    while !keep.is_empty() {
        match latent_loss(g, on, tg, predictor) {
            Ok(v) => return Ok(Some(v)),
            Err(TrainError::Autodiff(AutodiffError::Degenerate { column, norm })) => {
                tracing::warn!(?scale, norm, "skipping latent sample with degenerate norm");
                keep.remove(column);
                on = g.select_columns(online, &keep)?;
                tg = g.select_columns(target, &keep)?;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Total loss `L_p + α (L_r^s + L_r^l)` for one session's sample.
#[allow(clippy::too_many_arguments)]
pub fn session_loss(
    g: &mut Graph,
    config: &ModelConfig,
    params: &ModelParams<Var>,
    obs: &ObservationMatrix,
    choices: &[usize],
    sample: &SessionSample,
    alpha: f64,
    symmetrize: bool,
    targets: Targets,
) -> Result<(Var, LossParts), TrainError> {
    if choices.len() != obs.len() {
        return Err(TrainError::Usage(format!("{} choices for {} observations", choices.len(), obs.len())));
    }
    if let Some(&t) = sample.steps.iter().find(|&&t| t + 1 >= choices.len()) {
        return Err(TrainError::Usage(format!("step {t} has no next choice")));
    }
    let seq = SequenceEmbeddings::build(g, config, params, obs)?;
    let z = seq.concat(g, &sample.steps)?;
    let next: Vec<usize> = sample.steps.iter().map(|&t| choices[t + 1]).collect();
    let loss_p = action_loss(g, z, &next, &params.classifier)?;
    let mut parts = LossParts {
        loss_p: g.value(loss_p).data()[0],
        ..LossParts::default()
    };

    let mut latent = Vec::new();
    for scale in [Scale::Short, Scale::Long] {
        let Some(predictor) = params.predictor(scale) else {
            continue;
        };
        let online = seq.select(g, scale, &sample.steps)?;
        let target = match targets {
            Targets::Live => seq.select(g, scale, sample.targets(scale))?,
            Targets::Fixed(fixed) => {
                let t = fixed
                    .iter()
                    .find(|(s, _)| *s == scale)
                    .map(|(_, t)| t.clone())
                    .ok_or_else(|| TrainError::Usage(format!("no fixed targets for {scale:?}")))?;
                g.constant(t)
            }
        };
        let mut terms: Vec<Var> = filtered_latent_loss(g, online, target, predictor, scale)?.into_iter().collect();
        if symmetrize {
            terms.extend(filtered_latent_loss(g, target, online, predictor, scale)?);
        }
        let loss = match terms.as_slice() {
            [] => continue,
            [one] => *one,
            [a, b] => {
                let s = g.add(*a, *b)?;
                g.scale(s, 0.5)
            }
            _ => unreachable!(),
        };
        let value = g.value(loss).data()[0];
        match scale {
            Scale::Short => parts.loss_r_s = value,
            _ => parts.loss_r_l = value,
        }
        latent.push(loss);
    }

    let mut total = loss_p;
    if alpha > 0.0 && !latent.is_empty() {
        let mut r = latent[0];
        for &l in &latent[1..] {
            r = g.add(r, l)?;
        }
        let r = g.scale(r, alpha);
        total = g.add(total, r)?;
    }
    parts.total = g.value(total).data()[0];
    Ok((total, parts))
}
