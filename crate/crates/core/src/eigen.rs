//! Eigenvalues of dense symmetric matrices by cyclic Jacobi rotations.

use ndarray::Array2;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// All eigenvalues of a symmetric matrix, descending.
///
/// The input is symmetrized by averaging with its transpose; it must be symmetric to
/// `1e-8` relative to its Frobenius norm. Iterates until the off-diagonal Frobenius norm
/// drops below `1e-12 ‖A‖_F`.
pub fn sym_eigenvalues(matrix: &Array2<f64>) -> Result<Vec<f64>> {
    let (n, m) = matrix.dim();
    if n != m {
        return Err(Error::InvalidArgument(format!(
            "matrix must be square, got {n}x{m}"
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let fro = matrix.iter().map(|v| v * v).sum::<f64>().sqrt();
    let asym = (matrix - &matrix.t())
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if asym > 1e-8 * fro {
        return Err(Error::InvalidArgument(format!(
            "matrix is not symmetric: ‖A - Aᵀ‖_F / ‖A‖_F = {:e}",
            asym / fro
        )));
    }

    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (matrix[[i, j]] + matrix[[j, i]]);
        }
    }

    let tol = 1e-12 * fro;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a, n) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
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
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// `λ_max / λ_min⁺`, where `λ_min⁺` is the smallest eigenvalue above `1e-10 λ_max`.
/// `None` when there is no positive eigenvalue.
pub fn positive_condition_ratio(eigs_desc: &[f64]) -> Option<f64> {
    let max = *eigs_desc.first()?;
    if !(max > 0.0) {
        return None;
    }
    let min_pos = eigs_desc
        .iter()
        .copied()
        .filter(|&v| v > 1e-10 * max)
        .fold(f64::INFINITY, f64::min);
    Some(max / min_pos)
}

/// Median of a descending eigenvalue list (mean of the middle pair for even length).
pub fn median(eigs_desc: &[f64]) -> Option<f64> {
    let n = eigs_desc.len();
    if n == 0 {
        return None;
    }
    let mut v = eigs_desc.to_vec();
    v.sort_by(f64::total_cmp);
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
