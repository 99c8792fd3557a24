use serde::{Deserialize, Serialize};

use super::TrainError;

/// Hyperparameters of the decoupled-weight-decay Adam update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// First and second moments over the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One update in place. Nothing is modified when `grads` holds a
/// non-finite value.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, opt: &AdamW) -> Result<(), TrainError> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(TrainError::Usage(format!(
            "{} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFinite {
            what: "gradient",
            step: state.step + 1,
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * g;
        state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= opt.lr * (m_hat / (v_hat.sqrt() + opt.eps) + opt.weight_decay * params[i]);
    }
    Ok(())
}
