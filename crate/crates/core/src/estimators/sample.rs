use nalgebra::DMatrix;

use super::EstimateError;
use crate::linalg;

/// Unbiased sample covariance of the window (divisor M − 1).
pub fn sample_cov(window: &DMatrix<f64>) -> Result<DMatrix<f64>, EstimateError> {
    let (m, n) = window.shape();
    if m < 2 {
        return Err(EstimateError::InsufficientHistory {
            what: "sample covariance",
            needed: 2,
            got: m,
        });
    }
    if m <= n {
        log::warn!("near-singular sample covariance: {m} observations for {n} assets");
    }
    Ok(linalg::covariance(window))
}

/// Exponentially weighted covariance over the demeaned window:
/// `(1−λ) Σ_k λ^k x_{M−k} x_{M−k}ᵀ / (1 − λ^M)`.
pub fn ewma_cov(window: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>, EstimateError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(EstimateError::InvalidConfig(format!(
            "EWMA decay {lambda} outside (0, 1)"
        )));
    }
    let (m, n) = window.shape();
    if m < 1 {
        return Err(EstimateError::InsufficientHistory {
            what: "EWMA",
            needed: 1,
            got: m,
        });
    }
    let x = linalg::demean(window);
    let norm = (1.0 - lambda) / (1.0 - lambda.powi(m as i32));
    let mut s = DMatrix::zeros(n, n);
    let mut w = norm;
    for t in (0..m).rev() {
        let row = x.row(t);
        for i in 0..n {
            for j in 0..=i {
                s[(i, j)] += w * row[i] * row[j];
            }
        }
        w *= lambda;
        if w == 0.0 {
            break;
        }
    }
    for i in 0..n {
        for j in 0..i {
            s[(j, i)] = s[(i, j)];
        }
    }
    Ok(s)
}
