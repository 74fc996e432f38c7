//! Full BEKK(1,1,1) and its asymmetric extension.
//!
//! ```text
//! Hₜ = C Cᵀ + A εₜ₋₁εₜ₋₁ᵀ Aᵀ + B Hₜ₋₁ Bᵀ + G ηₜ₋₁ηₜ₋₁ᵀ Gᵀ
//! ```
//!
//! `C` is lower triangular and `η` keeps the innovations of assets whose
//! return was negative. Each series is demeaned and divided by its sample
//! standard deviation before fitting; the forecast is mapped back at the
//! end. The likelihood gradient is computed by a reverse pass through the
//! variance recursion, so one gradient costs about two likelihood
//! evaluations regardless of the parameter count.

use nalgebra::{DMatrix, DVector};

use super::EstimateError;
use crate::linalg;
use crate::optim::{minimize, Objective, OptimOptions};

pub const MAX_ASSETS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct BekkParams {
    pub c: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: Option<DMatrix<f64>>,
}

impl BekkParams {
    pub fn n_params(n: usize, asymmetric: bool) -> usize {
        n * (n + 1) / 2 + 2 * n * n + if asymmetric { n * n } else { 0 }
    }

    fn pack(&self) -> Vec<f64> {
        let n = self.c.nrows();
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                v.push(self.c[(i, j)]);
            }
        }
        v.extend(self.a.transpose().iter());
        v.extend(self.b.transpose().iter());
        if let Some(g) = &self.g {
            v.extend(g.transpose().iter());
        }
        v
    }

    fn unpack(x: &[f64], n: usize, asymmetric: bool) -> Self {
        let mut c = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                c[(i, j)] = x[k];
                k += 1;
            }
        }
        let a = DMatrix::from_row_slice(n, n, &x[k..k + n * n]);
        k += n * n;
        let b = DMatrix::from_row_slice(n, n, &x[k..k + n * n]);
        k += n * n;
        let g = asymmetric.then(|| DMatrix::from_row_slice(n, n, &x[k..k + n * n]));
        Self { c, a, b, g }
    }

    /// Spectral radius of `A⊗A + B⊗B (+ ½ G⊗G)`.
    pub fn persistence(&self) -> f64 {
        let mut m = linalg::kron(&self.a, &self.a) + linalg::kron(&self.b, &self.b);
        if let Some(g) = &self.g {
            m += linalg::kron(g, g) * 0.5;
        }
        linalg::spectral_radius(&m)
    }

    /// Unconditional covariance `vec Σ̄ = (I − A⊗A − B⊗B)⁻¹ vec(CCᵀ)` of the
    /// symmetric model.
    pub fn unconditional(&self) -> Option<DMatrix<f64>> {
        let n = self.c.nrows();
        let m = DMatrix::identity(n * n, n * n)
            - linalg::kron(&self.a, &self.a)
            - linalg::kron(&self.b, &self.b);
        let cc = &self.c * self.c.transpose();
        let v = DVector::from_iterator(n * n, cc.iter().copied());
        let sol = m.lu().solve(&v)?;
        Some(DMatrix::from_column_slice(n, n, sol.as_slice()))
    }
}

#[derive(Debug, Clone)]
pub struct BekkFit {
    /// Parameters on the original return scale.
    pub params: BekkParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub h_next: DMatrix<f64>,
}

struct BekkData {
    eps: DMatrix<f64>,
    neg: DMatrix<f64>,
    h0: DMatrix<f64>,
    asymmetric: bool,
}

impl BekkData {
    fn n(&self) -> usize {
        self.eps.ncols()
    }

    /// Log-likelihood and (optionally) its gradient in packed layout.
    fn loglik(&self, p: &BekkParams, want_grad: bool) -> (f64, Option<Vec<f64>>) {
        let (t_len, n) = self.eps.shape();
        let cc = &p.c * p.c.transpose();
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let mut h = self.h0.clone();
        let mut hs: Vec<DMatrix<f64>> = Vec::with_capacity(if want_grad { t_len } else { 0 });
        let mut dl_dh: Vec<DMatrix<f64>> = Vec::with_capacity(if want_grad { t_len } else { 0 });
        let mut ll = 0.0;
        for t in 0..t_len {
            if t > 0 {
                let e = self.eps.row(t - 1).transpose();
                let ae = &p.a * e;
                let mut next = &cc + &ae * ae.transpose() + &p.b * &h * p.b.transpose();
                if let Some(g) = &p.g {
                    let ge = g * self.neg.row(t - 1).transpose();
                    next += &ge * ge.transpose();
                }
                h = linalg::symmetrize(&next);
            }
            let Some(ch) = h.clone().cholesky() else {
                return (f64::NEG_INFINITY, None);
            };
            let e = self.eps.row(t).transpose();
            let u = ch.solve(&e);
            ll -= 0.5 * (n as f64 * ln2pi + linalg::log_det(&ch) + e.dot(&u));
            if want_grad {
                dl_dh.push((ch.inverse() - &u * u.transpose()) * -0.5);
                hs.push(h.clone());
            }
        }
        if !want_grad {
            return (ll, None);
        }
        // reverse pass: Ḡₜ = ∂ℓₜ/∂Hₜ + Bᵀ Ḡₜ₊₁ B
        let mut gc = DMatrix::zeros(n, n);
        let mut ga = DMatrix::zeros(n, n);
        let mut gb = DMatrix::zeros(n, n);
        let mut gg = DMatrix::zeros(n, n);
        let mut gbar = DMatrix::zeros(n, n);
        for t in (1..t_len).rev() {
            gbar = &dl_dh[t] + p.b.transpose() * &gbar * &p.b;
            let e = self.eps.row(t - 1).transpose();
            gc += &gbar * 2.0;
            ga += (&gbar * &p.a * &e) * e.transpose() * 2.0;
            gb += &gbar * &p.b * &hs[t - 1] * 2.0;
            if let Some(g) = &p.g {
                let en = self.neg.row(t - 1).transpose();
                gg += (&gbar * g * &en) * en.transpose() * 2.0;
            }
        }
        let gc = gc * &p.c;
        let mut grad = Vec::with_capacity(BekkParams::n_params(n, p.g.is_some()));
        for i in 0..n {
            for j in 0..=i {
                grad.push(gc[(i, j)]);
            }
        }
        grad.extend(ga.transpose().iter());
        grad.extend(gb.transpose().iter());
        if p.g.is_some() {
            grad.extend(gg.transpose().iter());
        }
        (ll, Some(grad))
    }

    fn h_next(&self, p: &BekkParams) -> DMatrix<f64> {
        let t_len = self.eps.nrows();
        let cc = &p.c * p.c.transpose();
        let mut h = self.h0.clone();
        for t in 1..=t_len {
            let e = self.eps.row(t - 1).transpose();
            let ae = &p.a * e;
            let mut next = &cc + &ae * ae.transpose() + &p.b * &h * p.b.transpose();
            if let Some(g) = &p.g {
                let ge = g * self.neg.row(t - 1).transpose();
                next += &ge * ge.transpose();
            }
            h = linalg::symmetrize(&next);
        }
        h
    }
}

struct BekkObjective<'a> {
    data: &'a BekkData,
}

impl Objective for BekkObjective<'_> {
    fn dim(&self) -> usize {
        BekkParams::n_params(self.data.n(), self.data.asymmetric)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let p = BekkParams::unpack(x, self.data.n(), self.data.asymmetric);
        -self.data.loglik(&p, false).0 / self.data.eps.nrows() as f64
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let p = BekkParams::unpack(x, self.data.n(), self.data.asymmetric);
        let t = self.data.eps.nrows() as f64;
        let (ll, g) = self.data.loglik(&p, true);
        match g {
            Some(g) => {
                for (dst, v) in grad.iter_mut().zip(g) {
                    *dst = -v / t;
                }
            }
            None => grad.iter_mut().for_each(|v| *v = f64::NAN),
        }
        -ll / t
    }

    fn feasible(&self, x: &[f64]) -> bool {
        let p = BekkParams::unpack(x, self.data.n(), self.data.asymmetric);
        p.persistence() < 1.0 - 1e-8
    }
}

/// Log-likelihood and analytic gradient at packed parameters on prepared
/// data (exposed for gradient checks).
pub fn bekk_loglik(
    eps: &DMatrix<f64>,
    negative: &DMatrix<f64>,
    params: &BekkParams,
) -> (f64, Vec<f64>) {
    let data = BekkData {
        eps: eps.clone(),
        neg: negative.clone(),
        h0: linalg::cross_product(eps, eps.nrows() as f64),
        asymmetric: params.g.is_some(),
    };
    let (ll, g) = data.loglik(params, true);
    (ll, g.unwrap_or_default())
}

pub fn pack(params: &BekkParams) -> Vec<f64> {
    params.pack()
}

pub fn unpack(x: &[f64], n: usize, asymmetric: bool) -> BekkParams {
    BekkParams::unpack(x, n, asymmetric)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BekkOptions {
    pub optim: OptimOptions,
    /// Initial diagonal of the asymmetric loading; 0.1 by default.
    pub g_start: f64,
}

impl Default for BekkOptions {
    fn default() -> Self {
        Self {
            optim: OptimOptions::default(),
            g_start: 0.1,
        }
    }
}

/// Fit BEKK (or ABEKK) and return the one-step covariance forecast.
pub fn bekk_fit(
    window: &DMatrix<f64>,
    asymmetric: bool,
    opts: &BekkOptions,
) -> Result<BekkFit, EstimateError> {
    let (m, n) = window.shape();
    if n > MAX_ASSETS {
        return Err(EstimateError::TooManyAssets {
            model: "BEKK",
            max: MAX_ASSETS,
            got: n,
        });
    }
    let k = BekkParams::n_params(n, asymmetric);
    if m < k + 50 {
        return Err(EstimateError::InsufficientHistory {
            what: "BEKK parameter count",
            needed: k + 50,
            got: m,
        });
    }
    let raw_eps = linalg::demean(window);
    let sd: Vec<f64> = (0..n)
        .map(|j| (raw_eps.column(j).norm_squared() / m as f64).sqrt())
        .collect();
    if sd.iter().any(|s| !(*s > 0.0)) {
        return Err(EstimateError::Degenerate("constant series".into()));
    }
    let eps = DMatrix::from_fn(m, n, |t, j| raw_eps[(t, j)] / sd[j]);
    let neg = DMatrix::from_fn(m, n, |t, j| if window[(t, j)] < 0.0 { eps[(t, j)] } else { 0.0 });
    let h0 = linalg::cross_product(&eps, m as f64);
    let data = BekkData {
        eps,
        neg,
        h0: h0.clone(),
        asymmetric,
    };

    let a0 = DMatrix::identity(n, n) * 0.2;
    let b0 = DMatrix::identity(n, n) * 0.9;
    let g0 = asymmetric.then(|| DMatrix::identity(n, n) * opts.g_start);
    let mut target = &h0 - &a0 * &h0 * a0.transpose() - &b0 * &h0 * b0.transpose();
    if let Some(g) = &g0 {
        let nbar = linalg::cross_product(&data.neg, m as f64);
        target -= g * nbar * g.transpose();
    }
    let c0 = match target.clone().cholesky() {
        Some(ch) => ch.l(),
        None => (h0.clone() * 0.1)
            .cholesky()
            .map(|c| c.l())
            .unwrap_or_else(|| DMatrix::identity(n, n) * 0.3),
    };
    let start = BekkParams {
        c: c0,
        a: a0,
        b: b0,
        g: g0,
    };
    let obj = BekkObjective { data: &data };
    let res = minimize(&obj, &start.pack(), &opts.optim);
    if !res.converged || !res.value.is_finite() {
        return Err(EstimateError::NonConvergence {
            model: if asymmetric { "ABEKK" } else { "BEKK" },
            detail: format!("objective {} after {} iterations", res.value, res.iterations),
        });
    }
    let p = BekkParams::unpack(&res.x, n, asymmetric);
    let h_scaled = data.h_next(&p);
    let ll_scaled = -res.value * m as f64;
    // back to the original scale: H = D Hs D, C = D Cs, A = D As D⁻¹, ...
    let d = DMatrix::from_diagonal(&DVector::from_vec(sd.clone()));
    let dinv = DMatrix::from_diagonal(&DVector::from_iterator(n, sd.iter().map(|s| 1.0 / s)));
    let params = BekkParams {
        c: &d * &p.c,
        a: &d * &p.a * &dinv,
        b: &d * &p.b * &dinv,
        g: p.g.as_ref().map(|g| &d * g * &dinv),
    };
    let log_sd: f64 = sd.iter().map(|s| s.ln()).sum();
    Ok(BekkFit {
        params,
        log_likelihood: ll_scaled - m as f64 * log_sd,
        iterations: res.iterations,
        converged: true,
        h_next: &d * h_scaled * &d,
    })
}

pub fn bekk_cov(
    window: &DMatrix<f64>,
    asymmetric: bool,
    opts: &BekkOptions,
) -> Result<DMatrix<f64>, EstimateError> {
    Ok(bekk_fit(window, asymmetric, opts)?.h_next)
}
