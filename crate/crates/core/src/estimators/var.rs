use nalgebra::{DMatrix, DVector};

use super::EstimateError;
use crate::linalg;

/// Equation-by-equation least squares of `y` (T×N) on regressors `x` (T×K).
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// K×N coefficients, `y_t = x_tᵀ B`.
    pub coef: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    /// Residual covariance with divisor T − K.
    pub residual_cov: DMatrix<f64>,
    /// Diagonal of `(XᵀX)⁻¹`.
    pub xtx_inv_diag: DVector<f64>,
    pub ridge: bool,
}

impl OlsFit {
    /// Standard error of `coef[(r, i)]`.
    pub fn std_error(&self, r: usize, i: usize) -> f64 {
        (self.residual_cov[(i, i)] * self.xtx_inv_diag[r]).sqrt()
    }
}

pub fn ols(y: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<OlsFit, EstimateError> {
    let (t, k) = x.shape();
    if t <= k {
        return Err(EstimateError::InsufficientHistory {
            what: "least squares",
            needed: k + 1,
            got: t,
        });
    }
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(y);
    let (coef, ridge) = linalg::spd_solve_ridge(&xtx, &xty)
        .ok_or_else(|| EstimateError::Degenerate("singular regressor matrix".into()))?;
    let (inv, _) = linalg::spd_solve_ridge(&xtx, &DMatrix::identity(k, k))
        .ok_or_else(|| EstimateError::Degenerate("singular regressor matrix".into()))?;
    let residuals = y - x * &coef;
    let residual_cov = linalg::cross_product(&residuals, (t - k) as f64);
    Ok(OlsFit {
        coef,
        residuals,
        residual_cov,
        xtx_inv_diag: inv.diagonal(),
        ridge,
    })
}

/// A fitted VAR(p) with intercept.
#[derive(Debug, Clone)]
pub struct VarFit {
    pub intercept: DVector<f64>,
    /// `lags[l]` is the N×N matrix on `y_{t−l−1}`.
    pub lags: Vec<DMatrix<f64>>,
    /// Standard errors matching `lags`.
    pub lag_std_errors: Vec<DMatrix<f64>>,
    pub residual_cov: DMatrix<f64>,
    pub one_step_mean: DVector<f64>,
    pub ridge: bool,
}

/// Regressor row `[1, y_{t−1}, …, y_{t−p}]` for each t in `p..T`.
pub(crate) fn lagged_design(y: &DMatrix<f64>, p: usize, intercept: bool) -> DMatrix<f64> {
    let (t, n) = y.shape();
    let k = usize::from(intercept) + n * p;
    DMatrix::from_fn(t - p, k, |row, col| {
        let tt = row + p;
        if intercept && col == 0 {
            1.0
        } else {
            let c = col - usize::from(intercept);
            y[(tt - 1 - c / n, c % n)]
        }
    })
}

/// Same layout as [`lagged_design`] but for the row following the sample.
pub(crate) fn forecast_regressor(y: &DMatrix<f64>, p: usize, intercept: bool) -> DVector<f64> {
    let (t, n) = y.shape();
    let k = usize::from(intercept) + n * p;
    DVector::from_fn(k, |col, _| {
        if intercept && col == 0 {
            1.0
        } else {
            let c = col - usize::from(intercept);
            y[(t - 1 - c / n, c % n)]
        }
    })
}

pub fn var_fit(window: &DMatrix<f64>, p: usize) -> Result<VarFit, EstimateError> {
    if p == 0 {
        return Err(EstimateError::InvalidConfig("VAR order must be at least 1".into()));
    }
    let (m, n) = window.shape();
    if m <= p || m - p <= n * p + 1 {
        return Err(EstimateError::InsufficientHistory {
            what: "VAR",
            needed: n * p + p + 2,
            got: m,
        });
    }
    let x = lagged_design(window, p, true);
    let y = window.rows(p, m - p).into_owned();
    let fit = ols(&y, &x)?;
    let intercept = fit.coef.row(0).transpose();
    let mut lags = Vec::with_capacity(p);
    let mut lag_std_errors = Vec::with_capacity(p);
    for l in 0..p {
        let a = DMatrix::from_fn(n, n, |i, j| fit.coef[(1 + l * n + j, i)]);
        let se = DMatrix::from_fn(n, n, |i, j| fit.std_error(1 + l * n + j, i));
        lags.push(a);
        lag_std_errors.push(se);
    }
    let one_step_mean = (forecast_regressor(window, p, true).transpose() * &fit.coef).transpose();
    Ok(VarFit {
        intercept,
        lags,
        lag_std_errors,
        residual_cov: fit.residual_cov,
        one_step_mean,
        ridge: fit.ridge,
    })
}
