//! Student-t copula on GARCH(1,1) margins.
//!
//! Standardised residuals are mapped to pseudo-observations through their
//! empirical distribution, `uᵢₜ = rank / (M + 1)`. The copula correlation and
//! degrees of freedom are fitted by profile likelihood: for each ν the
//! correlation is the fixed point of the t scatter-matrix iteration, and ν is
//! searched on a log scale over `[2.1, 100]`. The linear correlation implied
//! for the fitted margins is then computed by simulation with a fixed seed
//! and antithetic pairs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use super::dcc::Margins;
use super::EstimateError;
use crate::linalg;

pub const NU_MIN: f64 = 2.1;
pub const NU_MAX: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct CopulaFit {
    pub nu: f64,
    pub copula_corr: DMatrix<f64>,
    /// Linear correlation of the fitted joint distribution.
    pub implied_corr: DMatrix<f64>,
    pub nu_at_upper_bound: bool,
    pub log_likelihood: f64,
    pub sigma: DMatrix<f64>,
}

/// Empirical-CDF pseudo-observations, column by column.
pub fn pseudo_observations(z: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, n) = z.shape();
    let mut u = DMatrix::zeros(t, n);
    for j in 0..n {
        let mut idx: Vec<usize> = (0..t).collect();
        idx.sort_by(|&a, &b| z[(a, j)].total_cmp(&z[(b, j)]).then(a.cmp(&b)));
        for (rank, &i) in idx.iter().enumerate() {
            u[(i, j)] = (rank + 1) as f64 / (t + 1) as f64;
        }
    }
    u
}

fn t_quantiles(u: &DMatrix<f64>, nu: f64) -> DMatrix<f64> {
    let dist = StudentsT::new(0.0, 1.0, nu).expect("valid t");
    u.map(|p| dist.inverse_cdf(p))
}

/// Copula log-density summed over rows, and the scatter fixed point.
fn profile(u: &DMatrix<f64>, nu: f64) -> (f64, DMatrix<f64>) {
    let x = t_quantiles(u, nu);
    let (t, n) = x.shape();
    let mut r = linalg::correlation_from_cov(&linalg::cross_product(&x, t as f64));
    for _ in 0..50 {
        let Some(ch) = r.clone().cholesky() else { break };
        let mut s = DMatrix::zeros(n, n);
        for row in x.row_iter() {
            let xt = row.transpose();
            let q = xt.dot(&ch.solve(&xt));
            let w = (nu + n as f64) / (nu + q);
            s += &xt * xt.transpose() * w;
        }
        let next = linalg::correlation_from_cov(&s);
        let diff = (&next - &r).abs().max();
        r = next;
        if diff < 1e-9 {
            break;
        }
    }
    let Some(ch) = r.clone().cholesky() else {
        return (f64::NEG_INFINITY, r);
    };
    let nf = n as f64;
    let log_det = linalg::log_det(&ch);
    let c0 = ln_gamma((nu + nf) / 2.0) + (nf - 1.0) * ln_gamma(nu / 2.0) - nf * ln_gamma((nu + 1.0) / 2.0);
    let mut ll = 0.0;
    for row in x.row_iter() {
        let xt = row.transpose();
        let q = xt.dot(&ch.solve(&xt));
        let joint = -0.5 * (nu + nf) * (1.0 + q / nu).ln();
        let margins: f64 = xt.iter().map(|v| 0.5 * (nu + 1.0) * (1.0 + v * v / nu).ln()).sum();
        ll += c0 - 0.5 * log_det + joint + margins;
    }
    (ll, r)
}

/// Fit the t copula to pseudo-observations `u` (T×N).
pub fn fit_t_copula(u: &DMatrix<f64>) -> (f64, DMatrix<f64>, f64) {
    // golden-section search on ln ν
    let (mut lo, mut hi) = (NU_MIN.ln(), NU_MAX.ln());
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |l: f64| profile(u, l.exp()).0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..40 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        }
        if hi - lo < 1e-4 {
            break;
        }
    }
    // the boundaries are candidates too
    let mut best = ((lo + hi) / 2.0).exp();
    let mut best_ll = profile(u, best).0;
    for edge in [NU_MIN, NU_MAX] {
        let v = profile(u, edge).0;
        if v > best_ll {
            best_ll = v;
            best = edge;
        }
    }
    let (ll, r) = profile(u, best);
    (best, r, ll)
}

/// Empirical quantile of a sorted sample at probability `p`.
fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let t = sorted.len();
    let pos = p * (t + 1) as f64 - 1.0;
    if pos <= 0.0 {
        return sorted[0];
    }
    if pos >= (t - 1) as f64 {
        return sorted[t - 1];
    }
    let i = pos.floor() as usize;
    let w = pos - i as f64;
    sorted[i] * (1.0 - w) + sorted[i + 1] * w
}

/// Linear correlation of `X_j = F_j⁻¹(t_ν(Y_j))` with `Y ~ t_ν(0, R)`.
pub fn implied_correlation(
    z: &DMatrix<f64>,
    copula_corr: &DMatrix<f64>,
    nu: f64,
    draws: usize,
    seed: u64,
) -> DMatrix<f64> {
    let (_, n) = z.shape();
    let sorted: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut c: Vec<f64> = z.column(j).iter().copied().collect();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    let l = copula_corr
        .clone()
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let tdist = StudentsT::new(0.0, 1.0, nu).expect("valid t");
    let chi = ChiSquared::new(nu).expect("valid chi-squared");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (draws / 2).max(1);
    let mut samples = DMatrix::zeros(2 * pairs, n);
    for k in 0..pairs {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w: f64 = chi.sample(&mut rng);
        let scale = (nu / w).sqrt();
        let y = &l * g * scale;
        for (sign, row) in [(1.0, 2 * k), (-1.0, 2 * k + 1)] {
            for j in 0..n {
                let p = tdist.cdf(sign * y[j]);
                samples[(row, j)] = empirical_quantile(&sorted[j], p);
            }
        }
    }
    linalg::correlation_from_cov(&linalg::covariance(&samples))
}

/// Copula-GARCH covariance forecast from fitted margins.
pub fn copula_from_margins(
    margins: &Margins,
    draws: usize,
    seed: u64,
) -> Result<CopulaFit, EstimateError> {
    let n = margins.z.ncols();
    if n == 1 {
        let v = margins.sd_next[0] * margins.sd_next[0];
        return Ok(CopulaFit {
            nu: NU_MAX,
            copula_corr: DMatrix::identity(1, 1),
            implied_corr: DMatrix::identity(1, 1),
            nu_at_upper_bound: false,
            log_likelihood: 0.0,
            sigma: DMatrix::from_element(1, 1, v),
        });
    }
    let u = pseudo_observations(&margins.z);
    let (nu, copula_corr, ll) = fit_t_copula(&u);
    if !ll.is_finite() {
        return Err(EstimateError::Degenerate("t copula likelihood not finite".into()));
    }
    let implied_corr = implied_correlation(&margins.z, &copula_corr, nu, draws, seed);
    let sigma = linalg::scale_correlation(&implied_corr, &margins.sd_next);
    Ok(CopulaFit {
        nu,
        nu_at_upper_bound: nu >= NU_MAX * (1.0 - 1e-6),
        copula_corr,
        implied_corr,
        log_likelihood: ll,
        sigma,
    })
}
