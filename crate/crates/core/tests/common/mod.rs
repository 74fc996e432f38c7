//! Simulators and fixture loaders shared by the integration tests.
#![allow(dead_code)]

pub mod oracle;
pub mod recovery;

use std::fs::File;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use volport::data::{load_returns, ReturnPanel, Schema};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data").join(name)
}

pub fn load_fixture(name: &str) -> ReturnPanel {
    let f = File::open(data_path(name)).expect("fixture present");
    load_returns(f, &Schema::canonical()).expect("fixture parses").panel
}

/// Random PSD matrix; every fifth draw is rank deficient.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let k = if rng.random_range(0..5) == 0 { (n - 1).max(1) } else { n + 2 };
    let g = DMatrix::from_fn(n, k, |_, _| normal(rng));
    let scale: f64 = 10f64.powf(rng.random_range(-2.0..1.0));
    let mut s = &g * g.transpose() * (scale / k as f64);
    for i in 0..n {
        s[(i, i)] += 1e-6 * scale;
    }
    s
}

/// Lower-triangular Cholesky factor of a 2×2 correlation matrix.
fn corr_chol(rho: f64) -> (f64, f64) {
    (rho, (1.0 - rho * rho).sqrt())
}

pub fn garch11(rng: &mut ChaCha8Rng, omega: f64, alpha: f64, beta: f64, len: usize) -> Vec<f64> {
    let burn = 500;
    let mut h = omega / (1.0 - alpha - beta);
    let mut out = Vec::with_capacity(len);
    for t in 0..len + burn {
        let e = h.sqrt() * normal(rng);
        if t >= burn {
            out.push(e);
        }
        h = omega + alpha * e * e + beta * h;
    }
    out
}

/// Two GARCH(1,1) margins with DCC(1,1) correlation dynamics around `rho_bar`.
pub fn dcc2(rng: &mut ChaCha8Rng, a: f64, b: f64, rho_bar: f64, len: usize) -> DMatrix<f64> {
    let (omega, alpha, beta): (f64, f64, f64) = (0.05, 0.05, 0.90);
    let burn = 500;
    let qbar = DMatrix::from_row_slice(2, 2, &[1.0, rho_bar, rho_bar, 1.0]);
    let mut q = qbar.clone();
    let mut h = [omega / (1.0 - alpha - beta); 2];
    let mut out = DMatrix::zeros(len, 2);
    for t in 0..len + burn {
        let rho = q[(0, 1)] / (q[(0, 0)] * q[(1, 1)]).sqrt();
        let (l1, l2) = corr_chol(rho);
        let u = [normal(rng), normal(rng)];
        let z = [u[0], l1 * u[0] + l2 * u[1]];
        let e = [h[0].sqrt() * z[0], h[1].sqrt() * z[1]];
        if t >= burn {
            out[(t - burn, 0)] = e[0];
            out[(t - burn, 1)] = e[1];
        }
        let zv = DVector::from_row_slice(&z);
        q = &qbar * (1.0 - a - b) + &zv * zv.transpose() * a + &q * b;
        for i in 0..2 {
            h[i] = omega + alpha * e[i] * e[i] + beta * h[i];
        }
    }
    out
}

/// Constant-correlation Gaussian GARCH(1,1) pair.
pub fn ccc2(rng: &mut ChaCha8Rng, rho: f64, len: usize) -> DMatrix<f64> {
    dcc2(rng, 0.0, 0.0, rho, len)
}

/// Diagonal BEKK(1,1) with N=2; returns the sample and the model's
/// unconditional covariance.
pub fn diag_bekk2(rng: &mut ChaCha8Rng, len: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.1, 0.25]);
    let a = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.3, 0.25]));
    let b = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.93, 0.95]));
    let cc = &c * c.transpose();
    let mut uncond = DMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            let d = 1.0 - a[(i, i)] * a[(j, j)] - b[(i, i)] * b[(j, j)];
            uncond[(i, j)] = cc[(i, j)] / d;
        }
    }
    let burn = 500;
    let mut h = uncond.clone();
    let mut out = DMatrix::zeros(len, 2);
    for t in 0..len + burn {
        let l = h.clone().cholesky().expect("H positive definite").l();
        let e = &l * DVector::from_vec(normals(rng, 2));
        if t >= burn {
            out.set_row(t - burn, &e.transpose());
        }
        let ae = &a * &e;
        h = &cc + &ae * ae.transpose() + &b * &h * &b;
    }
    (out, uncond)
}

/// Two-regime Markov switching white noise with covariances `I` and `9I`.
pub fn regime_switching(rng: &mut ChaCha8Rng, n: usize, len: usize, stay: f64) -> DMatrix<f64> {
    let mut state = 0usize;
    let mut out = DMatrix::zeros(len, n);
    for t in 0..len {
        if rng.random::<f64>() > stay {
            state = 1 - state;
        }
        let sd = if state == 0 { 1.0 } else { 3.0 };
        for j in 0..n {
            out[(t, j)] = 0.1 + sd * normal(rng);
        }
    }
    out
}

/// Univariate stochastic volatility with log variance AR(1).
pub fn sv(rng: &mut ChaCha8Rng, mu: f64, phi: f64, sigma: f64, len: usize) -> Vec<f64> {
    let mut h = mu + sigma / (1.0 - phi * phi).sqrt() * normal(rng);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push((h / 2.0).exp() * normal(rng));
        h = mu + phi * (h - mu) + sigma * normal(rng);
    }
    out
}

pub struct Var2 {
    pub c: DVector<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
}

impl Var2 {
    pub fn stable_pair() -> Self {
        Self {
            c: DVector::from_row_slice(&[0.1, -0.05]),
            a1: DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]),
            a2: DMatrix::from_row_slice(2, 2, &[-0.2, 0.05, 0.1, 0.15]),
        }
    }

    pub fn simulate(&self, rng: &mut ChaCha8Rng, len: usize) -> DMatrix<f64> {
        let n = self.c.len();
        let burn = 200;
        let mut prev1 = DVector::zeros(n);
        let mut prev2 = DVector::zeros(n);
        let mut out = DMatrix::zeros(len, n);
        for t in 0..len + burn {
            let e = DVector::from_vec(normals(rng, n));
            let y = &self.c + &self.a1 * &prev1 + &self.a2 * &prev2 + e;
            if t >= burn {
                out.set_row(t - burn, &y.transpose());
            }
            prev2 = std::mem::replace(&mut prev1, y);
        }
        out
    }
}

/// Drift of the simulated stochastic trends. The trace test's critical values
/// (unrestricted intercept) are those of trending levels.
pub const TREND_DRIFT: f64 = 0.1;

pub fn random_walks(rng: &mut ChaCha8Rng, n: usize, len: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(len, n);
    for j in 0..n {
        let mut level = 0.0;
        for t in 0..len {
            level += TREND_DRIFT + normal(rng);
            out[(t, j)] = level;
        }
    }
    out
}

/// Bivariate system driven by one random walk: y₁ = x + u₁, y₂ = x + u₂,
/// so `y₁ − y₂` is stationary.
pub fn one_common_trend(rng: &mut ChaCha8Rng, len: usize) -> DMatrix<f64> {
    let mut x = 0.0;
    let mut out = DMatrix::zeros(len, 2);
    for t in 0..len {
        x += TREND_DRIFT + normal(rng);
        out[(t, 0)] = x + normal(rng);
        out[(t, 1)] = x + normal(rng);
    }
    out
}

/// Error-correcting system Δy = δ + α(β'y₋₁) + ε with β = (1, −1), a common
/// drift δ and the given α.
pub fn vecm_system(rng: &mut ChaCha8Rng, alpha: [f64; 2], len: usize) -> DMatrix<f64> {
    let mut y = [0.0f64; 2];
    let mut out = DMatrix::zeros(len, 2);
    for t in 0..len {
        let ec = y[0] - y[1];
        y[0] += TREND_DRIFT + alpha[0] * ec + normal(rng);
        y[1] += TREND_DRIFT + alpha[1] * ec + normal(rng);
        out[(t, 0)] = y[0];
        out[(t, 1)] = y[1];
    }
    out
}

pub fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

pub fn frobenius_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
