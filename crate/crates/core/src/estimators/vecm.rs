//! Johansen trace test and vector error-correction fits.
//!
//! The test uses the unrestricted-intercept, no-trend specification; the
//! cointegrating rank is the smallest `r` for which "rank ≤ r" is not
//! rejected at 5%.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::var::{ols, var_fit};
use super::EstimateError;

/// 5% trace-test critical values, unrestricted intercept, no trend, indexed
/// by `N − r` (1..=12).
const TRACE_CV_5: [f64; 12] = [
    3.8415, 15.4943, 29.7961, 47.8545, 69.8189, 95.7542, 125.6185, 159.5290, 197.3772, 239.2468,
    285.1402, 334.9795,
];

pub fn trace_critical_value(n_minus_r: usize) -> f64 {
    match n_minus_r {
        0 => 0.0,
        k if k <= TRACE_CV_5.len() => TRACE_CV_5[k - 1],
        // outside the tabulated range: extrapolate the roughly quadratic growth
        k => {
            let last = TRACE_CV_5.len();
            let slope = TRACE_CV_5[last - 1] - TRACE_CV_5[last - 2];
            let mut cv = TRACE_CV_5[last - 1];
            let mut step = slope;
            for _ in last..k {
                step += slope - (TRACE_CV_5[last - 2] - TRACE_CV_5[last - 3]);
                cv += step;
            }
            cv
        }
    }
}

#[derive(Debug, Clone)]
pub struct JohansenResult {
    /// Eigenvalues in decreasing order.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors (columns) matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// `trace[r]` tests the null "rank ≤ r".
    pub trace: Vec<f64>,
    pub rank: usize,
}

struct Reduced {
    dy: DMatrix<f64>,
    y_lag: DMatrix<f64>,
    /// `[1, Δy_{t−1}, …, Δy_{t−p+1}]`
    z: DMatrix<f64>,
}

fn reduced_form(window: &DMatrix<f64>, p: usize) -> Result<Reduced, EstimateError> {
    if p == 0 {
        return Err(EstimateError::InvalidConfig("VAR order must be at least 1".into()));
    }
    let (m, n) = window.shape();
    if m <= p || m - p <= n * p + 1 {
        return Err(EstimateError::InsufficientHistory {
            what: "VECM",
            needed: n * p + p + 2,
            got: m,
        });
    }
    let rows = m - p;
    let dy = DMatrix::from_fn(rows, n, |r, j| window[(r + p, j)] - window[(r + p - 1, j)]);
    let y_lag = DMatrix::from_fn(rows, n, |r, j| window[(r + p - 1, j)]);
    let k = 1 + n * (p - 1);
    let z = DMatrix::from_fn(rows, k, |r, c| {
        if c == 0 {
            1.0
        } else {
            let c = c - 1;
            let lag = c / n + 1;
            let t = r + p;
            window[(t - lag, c % n)] - window[(t - lag - 1, c % n)]
        }
    });
    Ok(Reduced { dy, y_lag, z })
}

pub fn johansen(window: &DMatrix<f64>, p: usize) -> Result<JohansenResult, EstimateError> {
    let red = reduced_form(window, p)?;
    let t = red.dy.nrows() as f64;
    let n = window.ncols();
    let r0 = ols(&red.dy, &red.z)?.residuals;
    let r1 = ols(&red.y_lag, &red.z)?.residuals;
    let s00 = r0.tr_mul(&r0) / t;
    let s01 = r0.tr_mul(&r1) / t;
    let s11 = r1.tr_mul(&r1) / t;
    let l11 = s11
        .clone()
        .cholesky()
        .ok_or_else(|| EstimateError::Degenerate("singular level moment matrix".into()))?;
    let ch00 = s00
        .clone()
        .cholesky()
        .ok_or_else(|| EstimateError::Degenerate("singular difference moment matrix".into()))?;
    // symmetric form L⁻¹ S10 S00⁻¹ S01 L⁻ᵀ
    let l = l11.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| EstimateError::Degenerate("singular Cholesky factor".into()))?;
    let s10 = s01.transpose();
    let mid = &linv * &s10 * ch00.solve(&s01) * linv.transpose();
    let mid = (&mid + mid.transpose()) * 0.5;
    let eig = SymmetricEigen::new(mid);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].clamp(0.0, 1.0 - 1e-15))
        .collect();
    let v = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
    let eigenvectors = linv.transpose() * v;
    let trace: Vec<f64> = (0..n)
        .map(|r| -t * eigenvalues[r..].iter().map(|l| (1.0 - l).ln()).sum::<f64>())
        .collect();
    let rank = (0..n)
        .find(|&r| trace[r] < trace_critical_value(n - r))
        .unwrap_or(n);
    Ok(JohansenResult {
        eigenvalues,
        eigenvectors,
        trace,
        rank,
    })
}

/// Cointegrating rank selected by the 5% trace test.
pub fn johansen_rank(window: &DMatrix<f64>, p: usize) -> Result<usize, EstimateError> {
    Ok(johansen(window, p)?.rank)
}

#[derive(Debug, Clone)]
pub struct VecmFit {
    pub rank: usize,
    /// N×r cointegrating vectors, normalised so the leading r×r block is I.
    pub beta: DMatrix<f64>,
    /// N×r adjustment coefficients.
    pub alpha: DMatrix<f64>,
    pub alpha_std_errors: DMatrix<f64>,
    pub residual_cov: DMatrix<f64>,
    /// One-step forecast of the next observation (levels of the input).
    pub one_step_mean: DVector<f64>,
    pub ridge: bool,
}

/// Fit a VECM with the rank chosen by [`johansen_rank`].
pub fn vecm_fit(window: &DMatrix<f64>, p: usize) -> Result<VecmFit, EstimateError> {
    let j = johansen(window, p)?;
    vecm_fit_with_rank(window, p, j.rank, &j)
}

pub fn vecm_fit_with_rank(
    window: &DMatrix<f64>,
    p: usize,
    rank: usize,
    j: &JohansenResult,
) -> Result<VecmFit, EstimateError> {
    let n = window.ncols();
    let m = window.nrows();
    let last = window.row(m - 1).transpose();
    if rank >= n {
        let v = var_fit(window, p)?;
        return Ok(VecmFit {
            rank: n,
            beta: DMatrix::identity(n, n),
            alpha: DMatrix::zeros(n, n),
            alpha_std_errors: DMatrix::zeros(n, n),
            residual_cov: v.residual_cov,
            one_step_mean: v.one_step_mean,
            ridge: v.ridge,
        });
    }
    let red = reduced_form(window, p)?;
    let mut beta = j.eigenvectors.columns(0, rank).into_owned();
    if rank > 0 {
        let top = beta.rows(0, rank).into_owned();
        if let Some(inv) = top.try_inverse() {
            beta = &beta * inv;
        }
    }
    // regressors: [1, Δ lags..., βᵀ y_{t−1}]
    let kz = red.z.ncols();
    let ect = &red.y_lag * &beta;
    let x = DMatrix::from_fn(red.z.nrows(), kz + rank, |r, c| {
        if c < kz {
            red.z[(r, c)]
        } else {
            ect[(r, c - kz)]
        }
    });
    let fit = ols(&red.dy, &x)?;
    let alpha = DMatrix::from_fn(n, rank, |i, k| fit.coef[(kz + k, i)]);
    let alpha_std_errors = DMatrix::from_fn(n, rank, |i, k| fit.std_error(kz + k, i));

    // forecast regressor for the next period
    let mut xf = DVector::zeros(kz + rank);
    xf[0] = 1.0;
    for c in 1..kz {
        let c0 = c - 1;
        let lag = c0 / n + 1;
        let t = m; // forecasting row index m
        xf[c] = window[(t - lag, c0 % n)] - window[(t - lag - 1, c0 % n)];
    }
    let ect_last = beta.transpose() * &last;
    for k in 0..rank {
        xf[kz + k] = ect_last[k];
    }
    let dy_hat = (xf.transpose() * &fit.coef).transpose();
    Ok(VecmFit {
        rank,
        beta,
        alpha,
        alpha_std_errors,
        residual_cov: fit.residual_cov,
        one_step_mean: last + dy_hat,
        ridge: fit.ridge,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values_increase() {
        assert_eq!(trace_critical_value(1), 3.8415);
        for k in 1..16 {
            assert!(trace_critical_value(k + 1) > trace_critical_value(k));
        }
    }

    #[test]
    fn rank_zero_matches_differenced_regression() {
        let w = DMatrix::from_fn(60, 2, |i, j| ((i * 37 + j * 11) % 17) as f64 * 0.1 + i as f64 * 0.01);
        let j = johansen(&w, 2).unwrap();
        let fit = vecm_fit_with_rank(&w, 2, 0, &j).unwrap();
        let red = reduced_form(&w, 2).unwrap();
        let direct = ols(&red.dy, &red.z).unwrap();
        assert!((fit.residual_cov - direct.residual_cov).abs().max() < 1e-14);
    }

    #[test]
    fn full_rank_matches_var_levels() {
        let w = DMatrix::from_fn(60, 2, |i, j| ((i * 37 + j * 11) % 17) as f64 * 0.1);
        let j = johansen(&w, 2).unwrap();
        let fit = vecm_fit_with_rank(&w, 2, 2, &j).unwrap();
        let v = var_fit(&w, 2).unwrap();
        assert_eq!(fit.residual_cov, v.residual_cov);
    }
}
