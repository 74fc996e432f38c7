//! Constant and dynamic conditional correlation models.
//!
//! Both start from per-asset GARCH(1,1) margins. CCC keeps the sample
//! correlation of the standardised residuals; DCC runs the scalar
//! correlation-targeting recursion
//!
//! ```text
//! Qₜ = (1−a−b) Q̄ − g N̄ + a zₜ₋₁zₜ₋₁ᵀ + g nₜ₋₁nₜ₋₁ᵀ + b Qₜ₋₁,   nₜ = zₜ ⊙ 1[zₜ<0]
//! ```
//!
//! with `g = 0` for the symmetric model, fitted by second-stage quasi-ML.

use nalgebra::DMatrix;

use super::garch::{garch11_fit, GarchFit, GarchOptions};
use super::EstimateError;
use crate::linalg;
use crate::optim::{minimize, Objective, OptimOptions};

/// Per-asset GARCH fits and the standardised residual matrix.
#[derive(Debug, Clone)]
pub struct Margins {
    pub fits: Vec<GarchFit>,
    /// M×N standardised residuals.
    pub z: DMatrix<f64>,
    /// One-step conditional standard deviations.
    pub sd_next: Vec<f64>,
}

pub fn fit_margins(window: &DMatrix<f64>, opts: &GarchOptions) -> Result<Margins, EstimateError> {
    let (m, n) = window.shape();
    let mut fits = Vec::with_capacity(n);
    for j in 0..n {
        let col: Vec<f64> = window.column(j).iter().copied().collect();
        fits.push(garch11_fit(&col, opts)?);
    }
    let z = DMatrix::from_fn(m, n, |t, j| fits[j].std_resid[t]);
    let sd_next = fits.iter().map(|f| f.next_variance.sqrt()).collect();
    Ok(Margins { fits, z, sd_next })
}

/// Target matrix `Q̄` shared by CCC and DCC.
pub fn q_bar(z: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::covariance(z)
}

pub fn ccc_from_margins(margins: &Margins) -> DMatrix<f64> {
    let r = linalg::correlation_from_cov(&q_bar(&margins.z));
    linalg::scale_correlation(&r, &margins.sd_next)
}

/// `D R D` with GARCH(1,1) volatilities and constant correlation.
pub fn ccc_cov(window: &DMatrix<f64>, opts: &GarchOptions) -> Result<DMatrix<f64>, EstimateError> {
    Ok(ccc_from_margins(&fit_margins(window, opts)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DccParams {
    pub a: f64,
    pub b: f64,
    pub g: f64,
}

#[derive(Debug, Clone)]
pub struct DccFit {
    pub params: DccParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Set when `g` had to be shrunk to keep the intercept PSD.
    pub g_shrunk: bool,
    pub r_next: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

fn negative_part(z: &DMatrix<f64>) -> DMatrix<f64> {
    z.map(|v| if v < 0.0 { v } else { 0.0 })
}

struct DccData {
    z: DMatrix<f64>,
    neg: DMatrix<f64>,
    qbar: DMatrix<f64>,
    nbar: DMatrix<f64>,
    /// Largest eigenvalue of Q̄^{-1/2} N̄ Q̄^{-1/2}.
    delta: f64,
}

impl DccData {
    fn new(z: &DMatrix<f64>) -> Self {
        let t = z.nrows() as f64;
        let qbar = q_bar(z);
        let neg = negative_part(z);
        let nbar = linalg::cross_product(&neg, t);
        let delta = match linalg::cholesky(&qbar) {
            Some(ch) => {
                let l = ch.l();
                let linv = l.try_inverse().unwrap_or_else(|| DMatrix::identity(z.ncols(), z.ncols()));
                let m = &linv * &nbar * linv.transpose();
                nalgebra::SymmetricEigen::new(linalg::symmetrize(&m))
                    .eigenvalues
                    .iter()
                    .copied()
                    .fold(0.0, f64::max)
            }
            None => 1.0,
        };
        Self {
            z: z.clone(),
            neg,
            qbar,
            nbar,
            delta,
        }
    }
}

/// Correlation part of the DCC quasi-log-likelihood and its gradient with
/// respect to `(a, b, g)`.
pub fn dcc_loglik(z: &DMatrix<f64>, params: DccParams, asymmetric: bool) -> (f64, [f64; 3]) {
    dcc_loglik_data(&DccData::new(z), params, asymmetric)
}

fn dcc_loglik_data(d: &DccData, p: DccParams, asymmetric: bool) -> (f64, [f64; 3]) {
    let (t_len, n) = d.z.shape();
    let g = if asymmetric { p.g } else { 0.0 };
    let intercept = if asymmetric {
        &d.qbar * (1.0 - p.a - p.b) - &d.nbar * g
    } else {
        &d.qbar * (1.0 - p.a - p.b)
    };
    let mut q = d.qbar.clone();
    let mut dq = [DMatrix::zeros(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
    let mut ll = 0.0;
    let mut grad = [0.0; 3];
    let mut r = DMatrix::zeros(n, n);
    for t in 0..t_len {
        if t > 0 {
            let zp = d.z.row(t - 1).transpose();
            let zz = &zp * zp.transpose();
            let q_prev = q.clone();
            // derivatives first: they use Q_{t-1}
            dq[0] = &zz - &d.qbar + &dq[0] * p.b;
            dq[1] = &q_prev - &d.qbar + &dq[1] * p.b;
            let mut next = &intercept + &zz * p.a + &q_prev * p.b;
            if asymmetric {
                let np = d.neg.row(t - 1).transpose();
                let nn = &np * np.transpose();
                dq[2] = &nn - &d.nbar + &dq[2] * p.b;
                next += &nn * g;
            }
            q = next;
        }
        let s: Vec<f64> = (0..n).map(|i| q[(i, i)].sqrt()).collect();
        if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return (f64::NEG_INFINITY, [f64::NAN; 3]);
        }
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] = if i == j { 1.0 } else { q[(i, j)] / (s[i] * s[j]) };
            }
        }
        let Some(ch) = r.clone().cholesky() else {
            return (f64::NEG_INFINITY, [f64::NAN; 3]);
        };
        let zt = d.z.row(t).transpose();
        let u = ch.solve(&zt);
        ll -= 0.5 * (linalg::log_det(&ch) + zt.dot(&u) - zt.dot(&zt));
        if t == 0 {
            continue;
        }
        // W = R⁻¹ − u uᵀ ; dℓ = −½ Σ W_ij dR_ij
        let w = ch.inverse() - &u * u.transpose();
        let n_par = if asymmetric { 3 } else { 2 };
        for k in 0..n_par {
            let dqk = &dq[k];
            let mut acc = 0.0;
            for i in 0..n {
                let di = dqk[(i, i)] / q[(i, i)];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let dj = dqk[(j, j)] / q[(j, j)];
                    let drij = dqk[(i, j)] / (s[i] * s[j]) - 0.5 * r[(i, j)] * (di + dj);
                    acc += w[(i, j)] * drij;
                }
            }
            grad[k] -= 0.5 * acc;
        }
    }
    (ll, grad)
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

struct DccObjective<'a> {
    data: &'a DccData,
    /// `None` → symmetric DCC; `Some(None)` → g estimated; `Some(Some(v))` → g fixed at v.
    asym: Option<Option<f64>>,
}

impl DccObjective<'_> {
    fn params(&self, u: &[f64]) -> DccParams {
        let s = logistic(u[0]);
        let q = logistic(u[1]);
        let g = match self.asym {
            Some(None) => u[2].exp(),
            Some(Some(v)) => v,
            None => 0.0,
        };
        DccParams {
            a: s * q,
            b: s * (1.0 - q),
            g,
        }
    }
}

impl Objective for DccObjective<'_> {
    fn dim(&self) -> usize {
        if matches!(self.asym, Some(None)) {
            3
        } else {
            2
        }
    }

    fn value(&self, u: &[f64]) -> f64 {
        let (ll, _) = dcc_loglik_data(self.data, self.params(u), self.asym.is_some());
        -ll / self.data.z.nrows() as f64
    }

    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.params(u);
        let (ll, g) = dcc_loglik_data(self.data, p, self.asym.is_some());
        let t = self.data.z.nrows() as f64;
        let s = logistic(u[0]);
        let q = logistic(u[1]);
        let ds = s * (1.0 - s);
        let dq = q * (1.0 - q);
        grad[0] = -(g[0] * q * ds + g[1] * (1.0 - q) * ds) / t;
        grad[1] = -(g[0] * s * dq - g[1] * s * dq) / t;
        if grad.len() == 3 {
            grad[2] = -(g[2] * p.g) / t;
        }
        -ll / t
    }

    fn feasible(&self, u: &[f64]) -> bool {
        let p = self.params(u);
        let g_load = if self.asym.is_some() { p.g * self.data.delta } else { 0.0 };
        p.a + p.b + g_load < 1.0 - 1e-10
    }
}

/// One-step correlation forecast `R_{T+1}` at given parameters.
pub fn dcc_r_next(z: &DMatrix<f64>, p: DccParams, asymmetric: bool) -> DMatrix<f64> {
    let d = DccData::new(z);
    r_next_data(&d, p, asymmetric)
}

fn r_next_data(d: &DccData, p: DccParams, asymmetric: bool) -> DMatrix<f64> {
    let t_len = d.z.nrows();
    let intercept = if asymmetric {
        &d.qbar * (1.0 - p.a - p.b) - &d.nbar * p.g
    } else {
        &d.qbar * (1.0 - p.a - p.b)
    };
    let mut q = d.qbar.clone();
    for t in 1..=t_len {
        let zp = d.z.row(t - 1).transpose();
        let mut next = &intercept + (&zp * zp.transpose()) * p.a + &q * p.b;
        if asymmetric {
            let np = d.neg.row(t - 1).transpose();
            next += (&np * np.transpose()) * p.g;
        }
        q = next;
    }
    linalg::correlation_from_cov(&q)
}

/// Covariance forecast from margins at fixed DCC parameters.
pub fn dcc_sigma_at(margins: &Margins, p: DccParams, asymmetric: bool) -> DMatrix<f64> {
    let r = dcc_r_next(&margins.z, p, asymmetric);
    linalg::scale_correlation(&r, &margins.sd_next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DccSpec {
    pub asymmetric: bool,
    /// Hold `g` at this value instead of estimating it.
    pub fixed_g: Option<f64>,
}

pub fn dcc_from_margins(
    margins: &Margins,
    spec: DccSpec,
    opts: &OptimOptions,
) -> Result<DccFit, EstimateError> {
    let data = DccData::new(&margins.z);
    let asym = if spec.asymmetric { Some(spec.fixed_g) } else { None };
    let obj = DccObjective { data: &data, asym };
    let (a0, b0) = (0.05, 0.90);
    let s0 = a0 + b0;
    let mut u0 = vec![logit(s0), logit(a0 / s0)];
    if matches!(asym, Some(None)) {
        let mut g0 = 0.02;
        while (a0 + b0 + g0 * data.delta) >= 1.0 - 1e-6 && g0 > 1e-8 {
            g0 *= 0.5;
        }
        u0.push(g0.ln());
    }
    let res = minimize(&obj, &u0, opts);
    if !res.converged || !res.value.is_finite() {
        return Err(EstimateError::NonConvergence {
            model: if spec.asymmetric { "ADCC" } else { "DCC" },
            detail: format!("objective {} after {} iterations", res.value, res.iterations),
        });
    }
    let mut params = obj.params(&res.x);
    let mut g_shrunk = false;
    if spec.asymmetric {
        for _ in 0..60 {
            let c = &data.qbar * (1.0 - params.a - params.b) - &data.nbar * params.g;
            if linalg::min_eigenvalue(&c) >= 0.0 || params.g == 0.0 {
                break;
            }
            params.g *= 0.5;
            if params.g < 1e-12 {
                params.g = 0.0;
            }
            g_shrunk = true;
        }
    }
    let (ll, _) = dcc_loglik_data(&data, params, spec.asymmetric);
    let r_next = r_next_data(&data, params, spec.asymmetric);
    let sigma = linalg::scale_correlation(&r_next, &margins.sd_next);
    Ok(DccFit {
        params,
        log_likelihood: ll,
        iterations: res.iterations,
        g_shrunk,
        r_next,
        sigma,
    })
}

/// DCC (or ADCC when `asymmetric`) covariance forecast for a window.
pub fn dcc_cov(
    window: &DMatrix<f64>,
    asymmetric: bool,
    garch: &GarchOptions,
) -> Result<DMatrix<f64>, EstimateError> {
    let margins = fit_margins(window, garch)?;
    let spec = DccSpec {
        asymmetric,
        fixed_g: None,
    };
    Ok(dcc_from_margins(&margins, spec, &garch.optim)?.sigma)
}
