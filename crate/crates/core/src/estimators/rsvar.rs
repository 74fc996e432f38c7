//! Markov-switching VAR with regime-specific intercepts and innovation
//! covariances and shared autoregressive matrices, fitted by EM.
//!
//! The E-step is the Hamilton filter followed by Kim's smoother. The M-step
//! is a conditional maximisation: transition probabilities from expected
//! transition counts, then the intercepts and shared lag matrices by
//! regime-weighted GLS given the current covariances, then the covariances
//! from the weighted residuals. Every step weakly raises the likelihood.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::var::{forecast_regressor, lagged_design};
use super::EstimateError;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsvarOptions {
    pub regimes: usize,
    pub lags: usize,
    pub starts: usize,
    pub max_iter: usize,
    /// Relative log-likelihood change that ends the EM loop.
    pub tol: f64,
    pub min_obs: usize,
}

impl Default for RsvarOptions {
    fn default() -> Self {
        Self {
            regimes: 2,
            lags: 2,
            starts: 20,
            max_iter: 500,
            tol: 1e-8,
            min_obs: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RsvarFit {
    /// Regimes ordered by increasing covariance trace.
    pub intercepts: Vec<DVector<f64>>,
    /// N×(N·p) shared lag matrix `[A₁ … A_p]`.
    pub ar: DMatrix<f64>,
    pub covs: Vec<DMatrix<f64>>,
    /// `transition[(i, j)] = P(s_{t+1} = j | s_t = i)`.
    pub transition: DMatrix<f64>,
    pub next_probs: DVector<f64>,
    pub log_likelihood: f64,
    /// Log-likelihood after each EM iteration of the winning start.
    pub trace: Vec<f64>,
    pub successful_starts: usize,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

struct Params {
    /// N × (K + N·p): `[c₁ … c_K, A]`.
    pi: DMatrix<f64>,
    covs: Vec<DMatrix<f64>>,
    trans: DMatrix<f64>,
    init: DVector<f64>,
}

struct Problem {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    k: usize,
}

struct EStep {
    ll: f64,
    filtered: DMatrix<f64>,
    smoothed: DMatrix<f64>,
    /// Σₜ ξ_{t,t+1|T}(i, j)
    trans_counts: DMatrix<f64>,
}

impl Problem {
    fn n(&self) -> usize {
        self.y.ncols()
    }

    fn t(&self) -> usize {
        self.y.nrows()
    }

    fn mean(&self, p: &Params, t: usize, regime: usize) -> DVector<f64> {
        let n = self.n();
        let np = self.x.ncols();
        let mut m = p.pi.column(regime).into_owned();
        for c in 0..np {
            let xv = self.x[(t, c)];
            if xv != 0.0 {
                for i in 0..n {
                    m[i] += p.pi[(i, self.k + c)] * xv;
                }
            }
        }
        m
    }

    fn e_step(&self, p: &Params) -> Option<EStep> {
        let (t_len, n) = (self.t(), self.n());
        let k = self.k;
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let chols: Vec<_> = p.covs.iter().map(|c| c.clone().cholesky()).collect();
        if chols.iter().any(|c| c.is_none()) {
            return None;
        }
        let chols: Vec<_> = chols.into_iter().map(Option::unwrap).collect();
        let log_dets: Vec<f64> = chols.iter().map(linalg::log_det).collect();

        let mut filtered = DMatrix::zeros(t_len, k);
        let mut predicted = DMatrix::zeros(t_len, k);
        let mut pred = p.init.clone();
        let mut ll = 0.0;
        for t in 0..t_len {
            let yt = self.y.row(t).transpose();
            let logd: Vec<f64> = (0..k)
                .map(|r| {
                    let e = &yt - self.mean(p, t, r);
                    let q = e.dot(&chols[r].solve(&e));
                    -0.5 * (n as f64 * ln2pi + log_dets[r] + q)
                })
                .collect();
            let mx = logd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let joint: Vec<f64> = (0..k).map(|r| pred[r] * (logd[r] - mx).exp()).collect();
            let total: f64 = joint.iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                return None;
            }
            ll += total.ln() + mx;
            for r in 0..k {
                predicted[(t, r)] = pred[r];
                filtered[(t, r)] = joint[r] / total;
            }
            pred = p.trans.transpose() * filtered.row(t).transpose();
        }
        let mut smoothed = filtered.clone();
        let mut trans_counts = DMatrix::zeros(k, k);
        for t in (0..t_len - 1).rev() {
            let ratio: Vec<f64> = (0..k)
                .map(|j| {
                    let d = predicted[(t + 1, j)];
                    if d > 0.0 {
                        smoothed[(t + 1, j)] / d
                    } else {
                        0.0
                    }
                })
                .collect();
            for i in 0..k {
                let mut s = 0.0;
                for j in 0..k {
                    let v = filtered[(t, i)] * p.trans[(i, j)] * ratio[j];
                    trans_counts[(i, j)] += v;
                    s += v;
                }
                smoothed[(t, i)] = s;
            }
        }
        Some(EStep {
            ll,
            filtered,
            smoothed,
            trans_counts,
        })
    }

    /// Intercepts and lag matrix by regime-weighted GLS given covariances.
    fn update_pi(&self, weights: &DMatrix<f64>, covs: &[DMatrix<f64>]) -> Option<DMatrix<f64>> {
        let (t_len, n) = (self.t(), self.n());
        let k = self.k;
        let np = self.x.ncols();
        let dz = k + np;
        let mut h = DMatrix::zeros(n * dz, n * dz);
        let mut rhs = DVector::zeros(n * dz);
        for r in 0..k {
            let inv = covs[r].clone().cholesky()?.inverse();
            let mut s = DMatrix::zeros(dz, dz);
            let mut yz = DMatrix::zeros(n, dz);
            for t in 0..t_len {
                let w = weights[(t, r)];
                if w == 0.0 {
                    continue;
                }
                let mut z = DVector::zeros(dz);
                z[r] = 1.0;
                for c in 0..np {
                    z[k + c] = self.x[(t, c)];
                }
                s += &z * z.transpose() * w;
                yz += self.y.row(t).transpose() * z.transpose() * w;
            }
            h += s.kronecker(&inv);
            let v = &inv * yz;
            rhs += DVector::from_column_slice(v.as_slice());
        }
        let (sol, _) = linalg::spd_solve_ridge(&h, &DMatrix::from_column_slice(n * dz, 1, rhs.as_slice()))?;
        Some(DMatrix::from_column_slice(n, dz, sol.as_slice()))
    }

    fn update_covs(&self, p: &Params, weights: &DMatrix<f64>, floor: f64) -> Option<Vec<DMatrix<f64>>> {
        let n = self.n();
        (0..self.k)
            .map(|r| {
                let total: f64 = weights.column(r).sum();
                if total < (n + 1) as f64 {
                    return None;
                }
                let mut s = DMatrix::zeros(n, n);
                for t in 0..self.t() {
                    let w = weights[(t, r)];
                    if w == 0.0 {
                        continue;
                    }
                    let e = self.y.row(t).transpose() - self.mean(p, t, r);
                    s += &e * e.transpose() * w;
                }
                s /= total;
                for i in 0..n {
                    s[(i, i)] += floor;
                }
                Some(linalg::symmetrize(&s))
            })
            .collect()
    }
}

/// 1-D k-means with random initial centres.
fn kmeans_1d(v: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut centres: Vec<f64> = (0..k).map(|_| v[rng.random_range(0..v.len())]).collect();
    centres.sort_by(f64::total_cmp);
    let mut labels = vec![0; v.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, &x) in v.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| (x - centres[a]).abs().total_cmp(&(x - centres[b]).abs()))
                .unwrap_or(0);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        for (c, centre) in centres.iter_mut().enumerate() {
            let members: Vec<f64> = v
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(x, _)| *x)
                .collect();
            if !members.is_empty() {
                *centre = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Log of a trailing rolling average of cross-sectional squared deviations.
fn rolling_log_variance(y: &DMatrix<f64>, span: usize) -> Vec<f64> {
    let mu = linalg::column_means(y);
    let sq: Vec<f64> = y
        .row_iter()
        .map(|r| r.iter().zip(mu.iter()).map(|(a, m)| (a - m) * (a - m)).sum::<f64>())
        .collect();
    let floor = sq.iter().sum::<f64>() / sq.len() as f64 * 1e-6 + f64::MIN_POSITIVE;
    (0..sq.len())
        .map(|t| {
            let from = t.saturating_sub(span / 2);
            let to = (t + span / 2 + 1).min(sq.len());
            (sq[from..to].iter().sum::<f64>() / (to - from) as f64 + floor).ln()
        })
        .collect()
}

fn run_start(
    prob: &Problem,
    rng: &mut ChaCha8Rng,
    opts: &RsvarOptions,
    floor: f64,
) -> Option<(Params, EStep, Vec<f64>)> {
    let (t_len, n) = (prob.t(), prob.n());
    let k = prob.k;
    let span = rng.random_range(5..=15);
    let labels = kmeans_1d(&rolling_log_variance(&prob.y, span), k, rng);
    let mut weights = DMatrix::zeros(t_len, k);
    for t in 0..t_len {
        let jitter: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let js: f64 = jitter.iter().sum();
        for r in 0..k {
            let hard = if labels[t] == r { 1.0 } else { 0.0 };
            weights[(t, r)] = 0.8 * hard + 0.2 * jitter[r] / js;
        }
    }
    let ident: Vec<DMatrix<f64>> = (0..k).map(|_| DMatrix::identity(n, n)).collect();
    let pi = prob.update_pi(&weights, &ident)?;
    let mut params = Params {
        pi,
        covs: ident,
        trans: DMatrix::from_fn(k, k, |i, j| if i == j { 0.9 } else { 0.1 / (k - 1) as f64 }),
        init: DVector::from_element(k, 1.0 / k as f64),
    };
    params.covs = prob.update_covs(&params, &weights, floor)?;

    let mut trace = Vec::new();
    let mut e = prob.e_step(&params)?;
    trace.push(e.ll);
    for _ in 0..opts.max_iter {
        // transitions
        let mut trans = e.trans_counts.clone();
        for i in 0..k {
            let s: f64 = trans.row(i).sum();
            if s > 0.0 {
                for j in 0..k {
                    trans[(i, j)] /= s;
                }
            } else {
                for j in 0..k {
                    trans[(i, j)] = 1.0 / k as f64;
                }
            }
        }
        params.trans = trans;
        params.init = e.smoothed.row(0).transpose();
        params.pi = prob.update_pi(&e.smoothed, &params.covs)?;
        params.covs = prob.update_covs(&params, &e.smoothed, floor)?;
        let next = prob.e_step(&params)?;
        let prev = e.ll;
        if next.ll < prev - 1e-8 * prev.abs().max(1.0) {
            log::debug!("EM likelihood fell from {prev} to {}", next.ll);
            return None;
        }
        e = next;
        trace.push(e.ll);
        if (e.ll - prev).abs() <= opts.tol * prev.abs().max(1.0) {
            break;
        }
    }
    Some((params, e, trace))
}

/// Fit the regime-switching VAR and form the predictive one-step moments.
pub fn rsvar_fit(window: &DMatrix<f64>, opts: &RsvarOptions, seed: u64) -> Result<RsvarFit, EstimateError> {
    let (m, n) = window.shape();
    let p = opts.lags;
    if p == 0 || opts.regimes < 2 {
        return Err(EstimateError::InvalidConfig(
            "RSVAR needs at least one lag and two regimes".into(),
        ));
    }
    if m < opts.min_obs.max(p + 2) {
        return Err(EstimateError::InsufficientHistory {
            what: "RSVAR",
            needed: opts.min_obs.max(p + 2),
            got: m,
        });
    }
    let prob = Problem {
        y: window.rows(p, m - p).into_owned(),
        x: lagged_design(window, p, false),
        k: opts.regimes,
    };
    let avg_var = linalg::covariance(window).trace() / n as f64;
    let floor = 1e-8 * avg_var.max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Params, EStep, Vec<f64>)> = None;
    let mut ok = 0;
    for _ in 0..opts.starts.max(1) {
        let mut start_rng = ChaCha8Rng::seed_from_u64(rng.random());
        if let Some(run) = run_start(&prob, &mut start_rng, opts, floor) {
            ok += 1;
            if best.as_ref().is_none_or(|b| run.1.ll > b.1.ll) {
                best = Some(run);
            }
        }
    }
    let (params, e, trace) = best.ok_or_else(|| EstimateError::NonConvergence {
        model: "RSVAR",
        detail: format!("all {} EM starts failed", opts.starts),
    })?;

    let k = opts.regimes;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| params.covs[a].trace().total_cmp(&params.covs[b].trace()));
    let last = e.filtered.row(prob.t() - 1).transpose();
    let next_raw = params.trans.transpose() * last;
    let xf = forecast_regressor(window, p, false);
    let ar = params.pi.columns(k, n * p).into_owned();
    let means: Vec<DVector<f64>> = (0..k)
        .map(|r| params.pi.column(r).into_owned() + &ar * &xf)
        .collect();
    let mu = (0..k).fold(DVector::zeros(n), |acc, r| acc + &means[r] * next_raw[r]);
    let mut sigma = DMatrix::zeros(n, n);
    for r in 0..k {
        let d = &means[r] - &mu;
        sigma += (&params.covs[r] + &d * d.transpose()) * next_raw[r];
    }
    Ok(RsvarFit {
        intercepts: order.iter().map(|&r| params.pi.column(r).into_owned()).collect(),
        ar,
        covs: order.iter().map(|&r| params.covs[r].clone()).collect(),
        transition: DMatrix::from_fn(k, k, |i, j| params.trans[(order[i], order[j])]),
        next_probs: DVector::from_iterator(k, order.iter().map(|&r| next_raw[r])),
        log_likelihood: e.ll,
        trace,
        successful_starts: ok,
        mu,
        sigma: linalg::symmetrize(&sigma),
    })
}
