//! Small dense linear-algebra helpers shared by the encoding and fitness code.

use nalgebra::DMatrix;

use crate::error::{ForoError, Result};

/// Solves `a · x = b` for symmetric positive-definite `a`.
pub fn spd_solve(a: DMatrix<f64>, b: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let chol = a.cholesky().ok_or(ForoError::FactorizationFailure(what))?;
    Ok(chol.solve(b))
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `‖a − b‖_F / max(‖b‖_F, tiny)`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let num = (a - b).norm();
    let den = b.norm().max(f64::MIN_POSITIVE);
    num / den
}

/// Ridge regression logits evaluated on the training rows themselves.
///
/// Returns `X (XᵀX + γI)⁻¹ XᵀY`. When there are fewer rows than columns the
/// equivalent kernel form `XXᵀ (XXᵀ + γI)⁻¹ Y` is used so the solve is n×n.
pub fn ridge_in_sample_logits(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    if gamma <= 0.0 {
        return Err(ForoError::NonpositiveGamma(gamma));
    }
    if x.nrows() != y.nrows() {
        return Err(ForoError::DimensionMismatch {
            context: "ridge targets",
            expected: x.nrows(),
            found: y.nrows(),
        });
    }
    let (n, m) = x.shape();
    if n == 0 {
        return Ok(DMatrix::zeros(0, y.ncols()));
    }
    if n <= m {
        let gram = x * x.transpose();
        let mut reg = gram.clone();
        for i in 0..n {
            reg[(i, i)] += gamma;
        }
        let alpha = spd_solve(reg, y, "ridge kernel system")?;
        Ok(gram * alpha)
    } else {
        let w = ridge_weights(x, y, gamma)?;
        Ok(x * w)
    }
}

/// Primal ridge weights `(XᵀX + γI)⁻¹ XᵀY` by Cholesky factorization.
pub fn ridge_weights(x: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    if gamma <= 0.0 {
        return Err(ForoError::NonpositiveGamma(gamma));
    }
    if x.nrows() != y.nrows() {
        return Err(ForoError::DimensionMismatch {
            context: "ridge targets",
            expected: x.nrows(),
            found: y.nrows(),
        });
    }
    let m = x.ncols();
    let mut a = x.transpose() * x;
    for i in 0..m {
        a[(i, i)] += gamma;
    }
    let rhs = x.transpose() * y;
    spd_solve(a, &rhs, "ridge normal equations")
}
