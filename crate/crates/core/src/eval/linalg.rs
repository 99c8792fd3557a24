//! Small dense helpers for the probes and projections.

use crate::autodiff::{gemm, MatMut, MatRef, Tensor};

/// `op(a) · op(b)` for 2-D tensors, `op` optionally transposing.
pub(crate) fn matmul(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
    fn view(t: &Tensor, trans: bool) -> MatRef<'_> {
        let (r, c) = t.dims2();
        let m = MatRef::row_major(t.data(), 0, r, c, c);
        if trans {
            m.t()
        } else {
            m
        }
    }
    let (va, vb) = (view(a, ta), view(b, tb));
    let (rows, cols) = (va.rows, vb.cols);
    let mut out = vec![0.0; rows * cols];
    gemm(1.0, va, vb, 0.0, MatMut::row_major(&mut out, 0, rows, cols, cols));
    Tensor::matrix(rows, cols, out).expect("non-empty product")
}

/// Column means and sample standard deviations of an `N × d` matrix.
pub(crate) fn column_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = x.dims2();
    let data = x.data();
    let mut mean = vec![0.0; d];
    for row in data.chunks(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in data.chunks(d) {
        for j in 0..d {
            var[j] += (row[j] - mean[j]).powi(2);
        }
    }
    let denom = (n.max(2) - 1) as f64;
    let std = var.into_iter().map(|v| (v / denom).sqrt()).collect();
    (mean, std)
}

/// Columns whose spread is negligible relative to their magnitude.
pub(crate) fn is_constant(mean: f64, std: f64) -> bool {
    !(std > 1e-9 * mean.abs().max(1.0))
}

/// Z-scores the columns of `x` with the given statistics, keeping only
/// `cols`.
pub(crate) fn standardize_with(x: &Tensor, mean: &[f64], std: &[f64], cols: &[usize]) -> Tensor {
    let (n, d) = x.dims2();
    let mut out = Vec::with_capacity(n * cols.len());
    for row in x.data().chunks(d) {
        out.extend(cols.iter().map(|&j| (row[j] - mean[j]) / std[j]));
    }
    Tensor::matrix(n, cols.len(), out).expect("non-empty")
}

/// Eigen-decomposition of a symmetric `n × n` row-major matrix by cyclic
/// Jacobi rotations. Returns eigenvalues in descending order and the
/// matching unit eigenvectors as the columns of a row-major matrix.
pub(crate) fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[k * n + col] = v[k * n + src];
        }
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matmul_matches_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Tensor::matrix(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let b = Tensor::matrix(4, 2, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let c = matmul(&a, true, &b, false);
        assert_eq!(c.shape(), &[3, 2]);
        for i in 0..3 {
            for j in 0..2 {
                let expected: f64 = (0..4).map(|k| a.at(k, i) * b.at(k, j)).sum();
                assert!((c.at(i, j) - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn jacobi_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 5, 12] {
            let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    a[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
                }
            }
            let (values, vectors) = symmetric_eigen(&a, n);
            let oracle = nalgebra::DMatrix::from_row_slice(n, n, &a).symmetric_eigen();
            let mut expected: Vec<f64> = oracle.eigenvalues.iter().copied().collect();
            expected.sort_by(|x, y| y.total_cmp(x));
            for (v, e) in values.iter().zip(&expected) {
                assert!((v - e).abs() < 1e-10, "{v} vs {e}");
            }
            for col in 0..n {
                for i in 0..n {
                    let av: f64 = (0..n).map(|k| a[i * n + k] * vectors[k * n + col]).sum();
                    assert!((av - values[col] * vectors[i * n + col]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn column_stats_and_constants() {
        let x = Tensor::matrix(3, 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let (mean, std) = column_stats(&x);
        assert_eq!(mean, vec![2.0, 5.0]);
        assert!((std[0] - 1.0).abs() < 1e-15);
        assert!(is_constant(mean[1], std[1]) && !is_constant(mean[0], std[0]));
        let z = standardize_with(&x, &mean, &std, &[0]);
        assert_eq!(z.data(), &[-1.0, 0.0, 1.0]);
    }
}
