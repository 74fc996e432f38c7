//! Stochastic volatility by MCMC, one asset at a time.
//!
//! Each standardised series follows `xₜ = exp(hₜ/2) εₜ` with
//! `hₜ = μ + φ(hₜ₋₁ − μ) + σ ηₜ`. The log-squared observation
//! `ln(xₜ² + c)` is treated as `hₜ` plus a ten-component normal mixture
//! approximating `ln χ²₁`, which makes the state space conditionally
//! Gaussian: mixture indicators are drawn given `h`, the path by
//! forward-filtering backward-sampling, μ from its conjugate normal, φ by
//! Metropolis–Hastings under a shifted Beta(20, 1.5) prior, and σ² from its
//! inverse-gamma conditional. The covariance forecast combines posterior-mean
//! one-step variances with the correlation of the standardised residuals.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::{derive_seed, EstimateError};
use crate::linalg;

/// `(probability, mean, variance)` of the mixture approximating `ln χ²₁`.
pub const MIXTURE: [(f64, f64, f64); 10] = [
    (0.00609, 1.92677, 0.11265),
    (0.04775, 1.34744, 0.17788),
    (0.13057, 0.73504, 0.26768),
    (0.20674, 0.02266, 0.40611),
    (0.22715, -0.85173, 0.62699),
    (0.18842, -1.97278, 0.98583),
    (0.12047, -3.46788, 1.57469),
    (0.05591, -5.55246, 2.54498),
    (0.01575, -8.68384, 4.16591),
    (0.00115, -14.65000, 7.33342),
];

const OFFSET: f64 = 1e-4;
const PHI_PRIOR: (f64, f64) = (20.0, 1.5);
const SIGMA2_PRIOR: (f64, f64) = (2.5, 0.025);
const MU_PRIOR_VAR: f64 = 100.0;
const PHI_EDGE: f64 = 0.995;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub draws: usize,
    pub thin: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            draws: 4000,
            thin: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvPosterior {
    pub mu: f64,
    pub phi: f64,
    pub sigma: f64,
    /// Share of retained φ draws beyond ±0.995.
    pub phi_edge_share: f64,
    /// Posterior mean of `E[exp(h_{T+1})]` on the original scale.
    pub next_variance: f64,
    /// Observations divided by the posterior mean of `exp(hₜ/2)`.
    pub std_resid: DVector<f64>,
    pub kept: usize,
}

#[derive(Debug, Clone)]
pub struct MsvFit {
    pub assets: Vec<SvPosterior>,
    pub corr: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub phi_at_edge: bool,
}

struct State {
    h: Vec<f64>,
    mu: f64,
    phi: f64,
    s2: f64,
}

fn draw_indicators(ystar: &[f64], h: &[f64], rng: &mut ChaCha8Rng, out: &mut [usize]) {
    let mut w = [0.0; 10];
    for t in 0..ystar.len() {
        let d = ystar[t] - h[t];
        let mut total = 0.0;
        for (k, &(p, m, v)) in MIXTURE.iter().enumerate() {
            let e = d - m;
            w[k] = p * (-0.5 * e * e / v).exp() / v.sqrt();
            total += w[k];
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = MIXTURE.len() - 1;
        for (k, wk) in w.iter().enumerate() {
            if u < *wk {
                pick = k;
                break;
            }
            u -= wk;
        }
        out[t] = pick;
    }
}

fn ffbs(ystar: &[f64], s: &[usize], st: &State, rng: &mut ChaCha8Rng, a: &mut [f64], p: &mut [f64]) -> Vec<f64> {
    let n = ystar.len();
    let (mu, phi, s2) = (st.mu, st.phi, st.s2);
    let mut am = mu;
    let mut pm = s2 / (1.0 - phi * phi);
    for t in 0..n {
        if t > 0 {
            am = mu + phi * (a[t - 1] - mu);
            pm = phi * phi * p[t - 1] + s2;
        }
        let (_, m, v) = MIXTURE[s[t]];
        let k = pm / (pm + v);
        a[t] = am + k * (ystar[t] - m - am);
        p[t] = (1.0 - k) * pm;
    }
    let mut h = vec![0.0; n];
    let z: f64 = rng.sample(StandardNormal);
    h[n - 1] = a[n - 1] + p[n - 1].sqrt() * z;
    for t in (0..n - 1).rev() {
        let denom = phi * phi * p[t] + s2;
        let gain = p[t] * phi / denom;
        let mean = a[t] + gain * (h[t + 1] - mu - phi * (a[t] - mu));
        let var = (p[t] - gain * phi * p[t]).max(0.0);
        let z: f64 = rng.sample(StandardNormal);
        h[t] = mean + var.sqrt() * z;
    }
    h
}

fn draw_mu(st: &State, rng: &mut ChaCha8Rng) -> f64 {
    let (phi, s2) = (st.phi, st.s2);
    let h = &st.h;
    let n = h.len();
    let mut prec = (1.0 - phi * phi) / s2 + 1.0 / MU_PRIOR_VAR;
    let mut num = (1.0 - phi * phi) * h[0] / s2;
    for t in 1..n {
        prec += (1.0 - phi) * (1.0 - phi) / s2;
        num += (1.0 - phi) * (h[t] - phi * h[t - 1]) / s2;
    }
    let z: f64 = rng.sample(StandardNormal);
    num / prec + z / prec.sqrt()
}

fn log_phi_prior(phi: f64) -> f64 {
    let (a, b) = PHI_PRIOR;
    let x = (phi + 1.0) / 2.0;
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
}

fn draw_phi(st: &State, rng: &mut ChaCha8Rng) -> f64 {
    let (mu, s2) = (st.mu, st.s2);
    let h = &st.h;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for t in 1..h.len() {
        let x = h[t - 1] - mu;
        sxy += (h[t] - mu) * x;
        sxx += x * x;
    }
    if !(sxx > 0.0) {
        return st.phi;
    }
    let mean = sxy / sxx;
    let sd = (s2 / sxx).sqrt();
    let z: f64 = rng.sample(StandardNormal);
    let prop = mean + sd * z;
    let u: f64 = rng.random();
    if prop.abs() >= 1.0 {
        return st.phi;
    }
    // the proposal is the conditional likelihood of the transitions; the
    // prior and the stationary density of h₁ enter the acceptance ratio
    let h0 = h[0] - mu;
    let log_init = |phi: f64| 0.5 * (1.0 - phi * phi).ln() - 0.5 * (1.0 - phi * phi) * h0 * h0 / s2;
    let log_ratio = log_phi_prior(prop) + log_init(prop) - log_phi_prior(st.phi) - log_init(st.phi);
    if u.ln() < log_ratio {
        prop
    } else {
        st.phi
    }
}

fn draw_sigma2(st: &State, rng: &mut ChaCha8Rng) -> f64 {
    let (mu, phi) = (st.mu, st.phi);
    let h = &st.h;
    let mut ss = (1.0 - phi * phi) * (h[0] - mu) * (h[0] - mu);
    for t in 1..h.len() {
        let e = h[t] - mu - phi * (h[t - 1] - mu);
        ss += e * e;
    }
    let shape = SIGMA2_PRIOR.0 + h.len() as f64 / 2.0;
    let rate = SIGMA2_PRIOR.1 + ss / 2.0;
    let g = Gamma::new(shape, 1.0 / rate).expect("valid gamma");
    1.0 / g.sample(rng)
}

/// Run the sampler on one return series.
pub fn sv_posterior(series: &[f64], mcmc: &McmcConfig, seed: u64) -> Result<SvPosterior, EstimateError> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n as f64 - 1.0);
    if !(var > 0.0) || !var.is_finite() {
        return Err(EstimateError::Degenerate("constant series".into()));
    }
    let scale = var.sqrt();
    let x: Vec<f64> = series.iter().map(|r| (r - mean) / scale).collect();
    let ystar: Vec<f64> = x.iter().map(|v| (v * v + OFFSET).ln()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu0 = ystar.iter().sum::<f64>() / n as f64 + 1.2704;
    let mut st = State {
        h: vec![mu0; n],
        mu: mu0,
        phi: 0.9,
        s2: 0.05,
    };
    let mut s = vec![0usize; n];
    let (mut a, mut p) = (vec![0.0; n], vec![0.0; n]);
    let thin = mcmc.thin.max(1);
    let total = mcmc.burn_in + mcmc.draws;
    let mut kept = 0usize;
    let (mut sum_mu, mut sum_phi, mut sum_sig, mut sum_next) = (0.0, 0.0, 0.0, 0.0);
    let mut edge = 0usize;
    let mut sum_half = vec![0.0; n];
    for it in 0..total {
        draw_indicators(&ystar, &st.h, &mut rng, &mut s);
        st.h = ffbs(&ystar, &s, &st, &mut rng, &mut a, &mut p);
        st.mu = draw_mu(&st, &mut rng);
        st.phi = draw_phi(&st, &mut rng);
        st.s2 = draw_sigma2(&st, &mut rng);
        if it >= mcmc.burn_in && (it - mcmc.burn_in) % thin == 0 {
            kept += 1;
            sum_mu += st.mu;
            sum_phi += st.phi;
            sum_sig += st.s2.sqrt();
            if st.phi.abs() > PHI_EDGE {
                edge += 1;
            }
            let h_next = st.mu + st.phi * (st.h[n - 1] - st.mu);
            sum_next += (h_next + 0.5 * st.s2).exp();
            for (acc, h) in sum_half.iter_mut().zip(&st.h) {
                *acc += (0.5 * h).exp();
            }
        }
    }
    if kept == 0 {
        return Err(EstimateError::InvalidConfig("MCMC retains no draws".into()));
    }
    let k = kept as f64;
    let next_variance = sum_next / k * var;
    if !next_variance.is_finite() {
        return Err(EstimateError::NonFinite);
    }
    let std_resid = DVector::from_fn(n, |t, _| x[t] / (sum_half[t] / k));
    Ok(SvPosterior {
        mu: sum_mu / k + var.ln(),
        phi: sum_phi / k,
        sigma: sum_sig / k,
        phi_edge_share: edge as f64 / k,
        next_variance,
        std_resid,
        kept,
    })
}

/// Independent SV margins with a constant residual correlation.
pub fn msv_fit(
    window: &DMatrix<f64>,
    mcmc: &McmcConfig,
    seed: u64,
    min_obs: usize,
) -> Result<MsvFit, EstimateError> {
    let (m, n) = window.shape();
    if m < min_obs {
        return Err(EstimateError::InsufficientHistory {
            what: "MSV",
            needed: min_obs,
            got: m,
        });
    }
    let assets = (0..n)
        .map(|j| {
            let col: Vec<f64> = window.column(j).iter().copied().collect();
            sv_posterior(&col, mcmc, derive_seed(seed, j as u64))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let z = DMatrix::from_fn(m, n, |t, j| assets[j].std_resid[t]);
    let corr = linalg::correlation_from_cov(&linalg::covariance(&z));
    let sd: Vec<f64> = assets.iter().map(|a| a.next_variance.sqrt()).collect();
    let sigma = linalg::scale_correlation(&corr, &sd);
    let phi_at_edge = assets.iter().any(|a| a.phi_edge_share > 0.5);
    if phi_at_edge {
        log::warn!("SV persistence posterior concentrated at the unit-root boundary");
    }
    Ok(MsvFit {
        assets,
        corr,
        sigma,
        phi_at_edge,
    })
}

/// Log density of the mixture at `x`, for checking it against `ln χ²₁`.
pub fn mixture_log_density(x: f64) -> f64 {
    let d: f64 = MIXTURE
        .iter()
        .map(|&(p, m, v)| p * (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt())
        .sum();
    d.ln()
}

/// Exact log density of `ln χ²₁`.
pub fn log_chi2_log_density(x: f64) -> f64 {
    0.5 * x - 0.5 * x.exp() - 0.5 * (2.0f64).ln() - ln_gamma(0.5)
}
