use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{column_stats, is_constant, matmul, standardize_with, symmetric_eigen};
use super::{argmax, EvalError};
use crate::autodiff::Tensor;

pub const PROBE_MIN_ROWS: usize = 30;
pub const PROBE_TRAIN_FRACTION: f64 = 0.8;
pub const PROBE_TOLERANCE: f64 = 1e-6;
pub const PROBE_MAX_ITERATIONS: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub subspace: String,
    pub accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub classes: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Multinomial logistic regression on an 80/20 row split.
///
/// Features are z-scored with training-row statistics (constant columns
/// dropped) and a bias column is appended. Full-batch gradient descent with
/// step `1/L`, `L` the Lipschitz bound of the mean cross-entropy gradient,
/// runs until the loss changes by less than the tolerance or the iteration
/// cap is reached. Returns held-out accuracy.
pub fn linear_probe(x: &Tensor, labels: &[usize], seed: u64) -> Result<ProbeResult, EvalError> {
    if x.shape().len() != 2 {
        return Err(EvalError::Usage("probe needs an N × d matrix".into()));
    }
    let (n, d) = x.dims2();
    if labels.len() != n {
        return Err(EvalError::Usage(format!("{} labels for {n} rows", labels.len())));
    }
    if n < PROBE_MIN_ROWS {
        return Err(EvalError::Usage(format!("probe needs at least {PROBE_MIN_ROWS} rows, got {n}")));
    }
    let mut ids = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(EvalError::Usage("probe labels contain a single class".into()));
    }
    let classes = ids.len();
    let dense: Vec<usize> = labels.iter().map(|l| ids.binary_search(l).expect("present")).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * PROBE_TRAIN_FRACTION).round() as usize).clamp(1, n - 1);
    let (train_rows, test_rows) = order.split_at(n_train);
    let gather = |rows: &[usize]| {
        let data = rows.iter().flat_map(|&r| x.data()[r * d..(r + 1) * d].iter().copied()).collect();
        Tensor::matrix(rows.len(), d, data).expect("non-empty")
    };
    let train_x = gather(train_rows);
    let (mean, std) = column_stats(&train_x);
    let kept: Vec<usize> = (0..d).filter(|&j| !is_constant(mean[j], std[j])).collect();
    let with_bias = |t: &Tensor| {
        let z = if kept.is_empty() {
            None
        } else {
            Some(standardize_with(t, &mean, &std, &kept))
        };
        let rows = t.dims2().0;
        let width = kept.len() + 1;
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            if let Some(z) = &z {
                out.extend_from_slice(&z.data()[r * kept.len()..(r + 1) * kept.len()]);
            }
            out.push(1.0);
        }
        Tensor::matrix(rows, width, out).expect("non-empty")
    };
    let xb = with_bias(&train_x);
    let test_x = with_bias(&gather(test_rows));
    let train_y: Vec<usize> = train_rows.iter().map(|&r| dense[r]).collect();
    let width = xb.dims2().1;

    let gram = matmul(&xb, true, &xb, false);
    let gram: Vec<f64> = gram.data().iter().map(|v| v / n_train as f64).collect();
    let lipschitz = 0.5 * symmetric_eigen(&gram, width).0[0];
    let step = 1.0 / lipschitz.max(f64::MIN_POSITIVE);

    let mut w = Tensor::zeros(&[width, classes]);
    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < PROBE_MAX_ITERATIONS {
        iterations += 1;
        let logits = matmul(&xb, false, &w, false);
        let mut resid = logits.into_data();
        let mut loss = 0.0;
        for (row, &y) in resid.chunks_mut(classes).zip(&train_y) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            loss += z.ln() + max - row[y];
            for v in row.iter_mut() {
                *v = (*v - max).exp() / z;
            }
            row[y] -= 1.0;
        }
        loss /= n_train as f64;
        let resid = Tensor::matrix(n_train, classes, resid)?;
        let grad = matmul(&xb, true, &resid, false);
        for (wi, gi) in w.data_mut().iter_mut().zip(grad.data()) {
            *wi -= step * gi / n_train as f64;
        }
        if (prev - loss).abs() < PROBE_TOLERANCE {
            converged = true;
            break;
        }
        prev = loss;
    }

    let logits = matmul(&test_x, false, &w, false);
    let correct = logits
        .data()
        .chunks(classes)
        .zip(test_rows)
        .filter(|(row, &r)| argmax(row) == dense[r])
        .count();
    Ok(ProbeResult {
        subspace: String::new(),
        accuracy: correct as f64 / test_rows.len() as f64,
        train_size: n_train,
        test_size: test_rows.len(),
        classes,
        iterations,
        converged,
    })
}
