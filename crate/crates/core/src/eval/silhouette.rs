use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::autodiff::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    pub subspace: String,
    pub score: f64,
    pub points: usize,
    pub clusters: usize,
    /// Every embedding in the subspace was identical, so all distances are
    /// zero and the score is 0 by convention.
    #[serde(default)]
    pub collapsed: bool,
}

/// Mean silhouette coefficient of the rows of `x` under Euclidean
/// distance. Points in singleton clusters score 0.
pub fn silhouette(x: &Tensor, labels: &[usize]) -> Result<f64, EvalError> {
    let (n, d) = x.dims2();
    if labels.len() != n {
        return Err(EvalError::Usage(format!("{} labels for {n} points", labels.len())));
    }
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(EvalError::Usage("silhouette needs at least two clusters".into()));
    }
    let dense: Vec<usize> = labels.iter().map(|l| ids.binary_search(l).expect("present")).collect();
    let c = ids.len();
    let mut sizes = vec![0usize; c];
    for &l in &dense {
        sizes[l] += 1;
    }
    let data = x.data();
    let mut sums = vec![0.0; n * c];
    for i in 0..n {
        let xi = &data[i * d..(i + 1) * d];
        let li = dense[i];
        let mut own = vec![0.0; c];
        for j in i + 1..n {
            let xj = &data[j * d..(j + 1) * d];
            let dist = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            own[dense[j]] += dist;
            sums[j * c + li] += dist;
        }
        for (s, o) in sums[i * c..(i + 1) * c].iter_mut().zip(own) {
            *s += o;
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let li = dense[i];
        if sizes[li] < 2 {
            continue;
        }
        let a = sums[i * c + li] / (sizes[li] - 1) as f64;
        let b = (0..c)
            .filter(|&k| k != li)
            .map(|k| sums[i * c + k] / sizes[k] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}
