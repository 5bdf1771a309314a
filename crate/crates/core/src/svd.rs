//! Singular values of dense real matrices.
//!
//! A tall matrix is first reduced to its `n × n` triangular factor with
//! Householder QR (singular values are invariant under the orthogonal factor),
//! then one-sided Jacobi rotations orthogonalize the columns of that factor.
//! The column norms at convergence are the singular values.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Singular values of the row-major `rows × cols` matrix, sorted descending.
/// The result has `min(rows, cols)` entries.
pub fn singular_values(data: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    assert_eq!(data.len(), rows * cols, "buffer does not match dimensions");
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("matrix has non-finite entries".into()));
    }

    // Column-major copy of the tall orientation (m >= n).
    let (m, n) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut columns: Vec<Vec<f64>> = if rows >= cols {
        (0..n).map(|j| (0..m).map(|i| data[i * cols + j]).collect()).collect()
    } else {
        (0..n).map(|j| data[j * cols..(j + 1) * cols].to_vec()).collect()
    };

    householder_r(&mut columns, m);
    for col in columns.iter_mut() {
        col.truncate(n);
    }
    jacobi_orthogonalize(&mut columns)?;

    let mut values: Vec<f64> = columns.iter().map(|c| norm(c)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

fn norm(v: &[f64]) -> f64 {
    // scaled to avoid overflow on large activations
    let scale = v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * v.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
}

/// In-place Householder triangularization; afterwards the top `n` rows of the
/// columns hold `R`.
fn householder_r(columns: &mut [Vec<f64>], m: usize) {
    let n = columns.len();
    for k in 0..n.min(m) {
        let alpha = norm(&columns[k][k..]);
        if alpha == 0.0 {
            continue;
        }
        let x0 = columns[k][k];
        let sign = if x0 >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = columns[k][k..].to_vec();
        v[0] += sign * alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        for col in columns.iter_mut().skip(k) {
            let tail = &mut col[k..];
            let dot: f64 = v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vtv;
            for (t, vi) in tail.iter_mut().zip(&v) {
                *t -= f * vi;
            }
        }
        // exact zeros below the diagonal
        columns[k][k] = -sign * alpha;
        for x in columns[k][k + 1..].iter_mut() {
            *x = 0.0;
        }
    }
}

fn jacobi_orthogonalize(columns: &mut [Vec<f64>]) -> Result<()> {
    let n = columns.len();
    let tol = f64::EPSILON * (columns.first().map_or(1, |c| c.len()) as f64);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let (left, right) = columns.split_at_mut(j);
                let a = &mut left[i];
                let b = &mut right[0];
                let alpha: f64 = a.iter().map(|x| x * x).sum();
                let beta: f64 = b.iter().map(|x| x * x).sum();
                let gamma: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let (xa, yb) = (*x, *y);
                    *x = c * xa - s * yb;
                    *y = s * xa + c * yb;
                }
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::NumericalFailure(format!(
        "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
    )))
}
