use serde::{Deserialize, Serialize};

use super::linalg::{column_stats, is_constant, matmul, standardize_with, symmetric_eigen};
use super::EvalError;
use crate::autodiff::Tensor;

/// Principal-component projection of column-standardised data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// `N × r` scores, `r = min(k, rank)`.
    pub coords: Tensor,
    /// Leading eigenvalues of the correlation matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Unit loadings over `kept_columns`, one per component.
    pub components: Vec<Vec<f64>>,
    /// Input columns that were not constant.
    pub kept_columns: Vec<usize>,
}

/// Projects the rows of `x` (`N × d`) onto the top `k` eigenvectors of the
/// covariance of its z-scored, non-constant columns. Each component's
/// largest-magnitude loading is made positive.
pub fn pca_project(x: &Tensor, k: usize) -> Result<PcaProjection, EvalError> {
    if x.shape().len() != 2 {
        return Err(EvalError::Usage("pca needs an N × d matrix".into()));
    }
    let (n, _) = x.dims2();
    if k == 0 || n <= k {
        return Err(EvalError::Usage(format!("pca to {k} dimensions needs more than {k} rows, got {n}")));
    }
    let (mean, std) = column_stats(x);
    let kept: Vec<usize> = (0..mean.len()).filter(|&j| !is_constant(mean[j], std[j])).collect();
    if kept.is_empty() {
        return Err(EvalError::Usage("every column is constant".into()));
    }
    let z = standardize_with(x, &mean, &std, &kept);
    let d = kept.len();
    let cov = matmul(&z, true, &z, false);
    let cov: Vec<f64> = cov.data().iter().map(|v| v / (n - 1) as f64).collect();
    let (values, vectors) = symmetric_eigen(&cov, d);
    let tol = 1e-10 * values[0].abs().max(f64::MIN_POSITIVE);
    let rank = values.iter().take_while(|&&v| v > tol).count();
    let r = k.min(rank);
    if r < k {
        tracing::warn!(k, rank, "data rank below requested dimension; projecting onto available rank");
    }
    if r == 0 {
        return Err(EvalError::Usage("data has rank 0".into()));
    }
    let mut components = Vec::with_capacity(r);
    for c in 0..r {
        let mut v: Vec<f64> = (0..d).map(|i| vectors[i * d + c]).collect();
        let lead = v.iter().enumerate().fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
    }
    let basis = Tensor::matrix(d, r, (0..d).flat_map(|i| components.iter().map(move |c| c[i])).collect())?;
    let coords = matmul(&z, false, &basis, false);
    Ok(PcaProjection {
        coords,
        eigenvalues: values[..r].to_vec(),
        components,
        kept_columns: kept,
    })
}
