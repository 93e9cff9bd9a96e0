//! Direct stationary solve for finite row-stochastic matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `pi P = pi`, `sum(pi) = 1` by dense LU factorization, replacing one
/// balance column with the normalization constraint.
///
/// Fails with `SingularSystem` when the chain is reducible (no unique
/// stationary vector), detected by factorization failure, a residual above
/// 1e-8, or negative mass.
pub fn stationary_distribution(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "transition matrix must be square");
    let mut a = matrix.transpose() - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or(Error::SingularSystem)?;

    let mut out: Vec<f64> = pi.iter().copied().collect();
    if out.iter().any(|v| *v < -1e-8) {
        return Err(Error::SingularSystem);
    }
    let residual = residual_inf(matrix, &out);
    if residual > 1e-8 {
        return Err(Error::SingularSystem);
    }
    for v in &mut out {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

/// Max-abs residual of `pi P - pi`.
pub fn residual_inf(matrix: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = matrix.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            acc += pi[i] * matrix[(i, j)];
        }
        worst = worst.max((acc - pi[j]).abs());
    }
    worst
}
