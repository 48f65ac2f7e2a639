//! Small dense helpers.

use crate::error::{BumpyError, Result};
use nalgebra::{DMatrix, DVector};

/// Solves a symmetric positive definite system, rejecting numerically singular matrices.
pub fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<Vec<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(BumpyError::RankDeficient("zero Gram matrix".into()));
    }
    let eig = a.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if min <= max * 1e-12 {
        return Err(BumpyError::RankDeficient(format!("eigenvalue ratio {:e}", min / max)));
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| BumpyError::RankDeficient("Cholesky failed".into()))?;
    Ok(chol.solve(&b).iter().cloned().collect())
}

/// Ordinary least-squares line fit; returns (slope, intercept, residual rms).
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - icpt - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, icpt, rms)
}
