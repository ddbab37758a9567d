//! Singular values and numerical rank via one-sided Jacobi.
//!
//! One-sided Jacobi orthogonalizes the columns of the matrix with plane
//! rotations until every pair is numerically orthogonal; the column norms
//! are then the singular values. Slower than bidiagonalization methods but
//! simple and accurate down to tiny singular values, which is what the
//! rank diagnostics need.

use super::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 64;
const ORTHO_TOL: f64 = 1e-14;

/// All singular values of `m`, sorted descending.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    if !m.is_finite() {
        return Err(Error::Numeric("singular_values: non-finite input".into()));
    }
    // Work on the tall orientation so we rotate the smaller column set.
    let mut a = if m.rows() >= m.cols() {
        m.clone()
    } else {
        m.transpose()
    };
    let rows = a.rows();
    let cols = a.cols();

    // Columns whose norm falls this far below the matrix scale are treated
    // as exact zeros; rotating them against real columns only churns
    // rounding noise and can cycle forever on rank-deficient input.
    let frob: f64 = a.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    let tiny_sq = (frob * 1e-14).powi(2);

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols.saturating_sub(1) {
            for q in p + 1..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..rows {
                    let ap = a.get(i, p);
                    let aq = a.get(i, q);
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if alpha <= tiny_sq || beta <= tiny_sq {
                    continue;
                }
                if gamma.abs() <= ORTHO_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let ap = a.get(i, p);
                    let aq = a.get(i, q);
                    a.set(i, p, c * ap - s * aq);
                    a.set(i, q, s * ap + c * aq);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "jacobi SVD did not converge within {} sweeps",
            MAX_SWEEPS
        )));
    }

    let mut sigma: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| a.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(sigma)
}

/// Number of singular values above `rel_tol` times the largest one.
/// A zero matrix has rank 0.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    if rel_tol <= 0.0 {
        return Err(Error::Input(format!(
            "numerical_rank: rel_tol must be positive, got {}",
            rel_tol
        )));
    }
    let sigma = singular_values(m)?;
    let max = sigma.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return Ok(0);
    }
    Ok(sigma.iter().filter(|&&s| s > rel_tol * max).count())
}
