//! Univariate GARCH(1,1) by Gaussian quasi-maximum likelihood.
//!
//! `σ²ₜ = ω + α ε²ₜ₋₁ + β σ²ₜ₋₁` on the demeaned series. The fit runs on
//! the series rescaled to unit variance and maps ω back afterwards. The
//! recursion starts at the sample variance. Parameters are optimised in the
//! unconstrained coordinates `(ln ω, logit(α+β), logit(α/(α+β)))`, which
//! enforce ω > 0, α, β ≥ 0 and α + β < 1.

use nalgebra::DVector;

use super::EstimateError;
use crate::optim::{minimize, Objective, OptimOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchOptions {
    pub min_obs: usize,
    pub optim: OptimOptions,
    /// Extra starting points tried when the first fit fails to converge.
    pub restarts: usize,
}

impl Default for GarchOptions {
    fn default() -> Self {
        Self {
            min_obs: 100,
            optim: OptimOptions::default(),
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarchFit {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mean: f64,
    /// σ² of the final in-sample observation.
    pub last_variance: f64,
    /// One-step-ahead forecast σ²_{M+1}.
    pub next_variance: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// In-sample conditional variances.
    pub variances: DVector<f64>,
    /// Demeaned observations divided by their conditional standard deviation.
    pub std_resid: DVector<f64>,
}

const STARTS: [(f64, f64); 4] = [(0.05, 0.90), (0.10, 0.80), (0.02, 0.97), (0.20, 0.60)];

/// Gaussian log-likelihood of GARCH(1,1) at natural parameters
/// `(ω, α, β)` with `σ²₁ = h0`, and its analytic gradient.
pub fn garch_loglik(params: [f64; 3], eps: &[f64], h0: f64) -> (f64, [f64; 3]) {
    let [omega, alpha, beta] = params;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut h = h0;
    let mut dh = [0.0f64; 3];
    let mut ll = 0.0;
    let mut grad = [0.0f64; 3];
    for (t, &e) in eps.iter().enumerate() {
        if t > 0 {
            let e_prev = eps[t - 1];
            let h_prev = h;
            dh = [
                1.0 + beta * dh[0],
                e_prev * e_prev + beta * dh[1],
                h_prev + beta * dh[2],
            ];
            h = omega + alpha * e_prev * e_prev + beta * h_prev;
        }
        if !(h > 0.0) || !h.is_finite() {
            return (f64::NEG_INFINITY, [f64::NAN; 3]);
        }
        let e2 = e * e;
        ll -= 0.5 * (ln2pi + h.ln() + e2 / h);
        let w = 0.5 * (e2 / h - 1.0) / h;
        for k in 0..3 {
            grad[k] += w * dh[k];
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

fn to_natural(u: &[f64]) -> [f64; 3] {
    let omega = u[0].exp();
    let s = logistic(u[1]);
    let q = logistic(u[2]);
    [omega, s * q, s * (1.0 - q)]
}

struct GarchObjective<'a> {
    x: &'a [f64],
    h0: f64,
}

impl Objective for GarchObjective<'_> {
    fn dim(&self) -> usize {
        3
    }

    fn value(&self, u: &[f64]) -> f64 {
        let (ll, _) = garch_loglik(to_natural(u), self.x, self.h0);
        -ll / self.x.len() as f64
    }

    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let p = to_natural(u);
        let (ll, g) = garch_loglik(p, self.x, self.h0);
        let s = logistic(u[1]);
        let q = logistic(u[2]);
        let ds = s * (1.0 - s);
        let dq = q * (1.0 - q);
        let m = self.x.len() as f64;
        grad[0] = -(g[0] * p[0]) / m;
        grad[1] = -(g[1] * q * ds + g[2] * (1.0 - q) * ds) / m;
        grad[2] = -(g[1] * s * dq - g[2] * s * dq) / m;
        -ll / m
    }

    fn feasible(&self, u: &[f64]) -> bool {
        let p = to_natural(u);
        p[0] > 0.0 && p[0].is_finite() && p[1] + p[2] < 1.0 - 1e-10
    }
}

/// Fit GARCH(1,1) to one return series.
pub fn garch11_fit(series: &[f64], opts: &GarchOptions) -> Result<GarchFit, EstimateError> {
    let m = series.len();
    if m < opts.min_obs.max(3) {
        return Err(EstimateError::InsufficientHistory {
            what: "GARCH(1,1)",
            needed: opts.min_obs.max(3),
            got: m,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(EstimateError::NonFinite);
    }
    let mean = series.iter().sum::<f64>() / m as f64;
    let eps: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let var = eps.iter().map(|e| e * e).sum::<f64>() / m as f64;
    if !(var > 0.0) {
        return Err(EstimateError::Degenerate("constant series".into()));
    }
    let scale = var.sqrt();
    let x: Vec<f64> = eps.iter().map(|e| e / scale).collect();
    let obj = GarchObjective { x: &x, h0: 1.0 };

    let mut best: Option<(crate::optim::OptimResult, usize)> = None;
    let mut total_iter = 0;
    for (k, &(a0, b0)) in STARTS.iter().enumerate().take(opts.restarts + 1) {
        let s0 = a0 + b0;
        let u0 = [(1.0 - s0).ln(), logit(s0), logit(a0 / s0)];
        let res = minimize(&obj, &u0, &opts.optim);
        total_iter += res.iterations;
        let better = match &best {
            None => true,
            Some((b, _)) => {
                (res.converged && !b.converged) || (res.converged == b.converged && res.value < b.value)
            }
        };
        if better {
            best = Some((res, k));
        }
        if best.as_ref().is_some_and(|(b, _)| b.converged) {
            break;
        }
    }
    let (res, _) = best.expect("at least one start");
    if !res.converged {
        return Err(EstimateError::NonConvergence {
            model: "GARCH(1,1)",
            detail: format!("objective {} after {total_iter} iterations", res.value),
        });
    }
    let [omega_x, alpha, beta] = to_natural(&res.x);
    let (ll_x, _) = garch_loglik([omega_x, alpha, beta], &x, 1.0);

    let mut h = DVector::zeros(m);
    h[0] = 1.0;
    for t in 1..m {
        h[t] = omega_x + alpha * x[t - 1] * x[t - 1] + beta * h[t - 1];
    }
    let next_x = omega_x + alpha * x[m - 1] * x[m - 1] + beta * h[m - 1];
    let std_resid = DVector::from_fn(m, |t, _| x[t] / h[t].sqrt());
    let variances = h * var;
    Ok(GarchFit {
        omega: omega_x * var,
        alpha,
        beta,
        mean,
        last_variance: variances[m - 1],
        next_variance: next_x * var,
        // likelihood of the original-scale series
        log_likelihood: ll_x - m as f64 * scale.ln(),
        iterations: total_iter,
        converged: true,
        variances,
        std_resid,
    })
}
