//! Performance criteria and tests against the benchmark.
//!
//! Sharpe ratios and volatilities are per period and not annualised.
//! Sharpe-ratio differences are tested with the delta method and a
//! kernel long-run covariance of `(aₜ, bₜ, aₜ², bₜ²)`, optionally refined by
//! a studentised circular block bootstrap. Volatility differences are tested
//! with the Brown–Forsythe F* statistic and with a Diebold–Mariano test on
//! squared forecast errors.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::backtest::BacktestResult;
use crate::estimators::ModelId;
use crate::strategies::StrategyId;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StatsError {
    #[error("series too short: need {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate series: zero standard deviation")]
    Degenerate,
    #[error("non-finite values in series")]
    NonFinite,
}

fn check_len(x: &[f64], needed: usize) -> Result<(), StatsError> {
    if x.len() < needed {
        return Err(StatsError::TooShort { needed, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (divisor n − 1).
pub fn volatility(x: &[f64]) -> Result<f64, StatsError> {
    check_len(x, 2)?;
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (x.len() - 1) as f64).sqrt())
}

/// Mean over sample standard deviation.
pub fn sharpe(x: &[f64]) -> Result<f64, StatsError> {
    let sd = volatility(x)?;
    if !(sd > 0.0) {
        return Err(StatsError::Degenerate);
    }
    Ok(mean(x) / sd)
}

/// Two-sided normal p-value.
pub fn normal_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub reps: usize,
    pub block: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            reps: 1000,
            block: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Difference of the compared quantity (first minus second series).
    pub delta: f64,
    pub stat: f64,
    pub p: f64,
}

fn parzen(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 {
        1.0 - 6.0 * a * a + 6.0 * a * a * a
    } else if a <= 1.0 {
        2.0 * (1.0 - a).powi(3)
    } else {
        0.0
    }
}

/// Plug-in bandwidth for the Parzen kernel from AR(1) fits to each column.
fn andrews_bandwidth(v: &[Vector4<f64>]) -> f64 {
    let t = v.len();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..4 {
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for i in 1..t {
            sxy += v[i][k] * v[i - 1][k];
            sxx += v[i - 1][k] * v[i - 1][k];
        }
        if !(sxx > 0.0) {
            continue;
        }
        let rho = (sxy / sxx).clamp(-0.97, 0.97);
        let s2 = (1..t).map(|i| (v[i][k] - rho * v[i - 1][k]).powi(2)).sum::<f64>() / (t - 1) as f64;
        num += 4.0 * rho * rho * s2 * s2 / (1.0 - rho).powi(8);
        den += s2 * s2 / (1.0 - rho).powi(4);
    }
    let alpha = if den > 0.0 { num / den } else { 0.0 };
    2.6614 * (alpha * t as f64).powf(0.2)
}

/// Kernel long-run covariance with small-sample factor T/(T−4).
fn parzen_lrv(v: &[Vector4<f64>]) -> Matrix4<f64> {
    let t = v.len();
    let st = andrews_bandwidth(v);
    let gamma = |j: usize| -> Matrix4<f64> {
        let mut g = Matrix4::zeros();
        for i in j..t {
            g += v[i] * v[i - j].transpose();
        }
        g / t as f64
    };
    let mut psi = gamma(0);
    if st > 0.0 {
        for j in 1..t {
            let w = parzen(j as f64 / st);
            if w == 0.0 {
                break;
            }
            let g = gamma(j);
            psi += (g + g.transpose()) * w;
        }
    }
    psi * (t as f64 / (t as f64 - 4.0))
}

struct SharpeMoments {
    diff: f64,
    grad: Vector4<f64>,
    centred: Vec<Vector4<f64>>,
}

fn sharpe_moments(a: &[f64], b: &[f64]) -> Result<SharpeMoments, StatsError> {
    let t = a.len() as f64;
    let y: Vec<Vector4<f64>> = a.iter().zip(b).map(|(x, z)| Vector4::new(*x, *z, x * x, z * z)).collect();
    let m = y.iter().fold(Vector4::zeros(), |acc, v| acc + v) / t;
    let va = m[2] - m[0] * m[0];
    let vb = m[3] - m[1] * m[1];
    if !(va > 0.0) || !(vb > 0.0) {
        return Err(StatsError::Degenerate);
    }
    let grad = Vector4::new(
        m[2] / va.powf(1.5),
        -m[3] / vb.powf(1.5),
        -0.5 * m[0] / va.powf(1.5),
        0.5 * m[1] / vb.powf(1.5),
    );
    Ok(SharpeMoments {
        diff: m[0] / va.sqrt() - m[1] / vb.sqrt(),
        grad,
        centred: y.iter().map(|v| v - m).collect(),
    })
}

/// Robust test of equal Sharpe ratios for paired series.
pub fn lw_sharpe_test(a: &[f64], b: &[f64], bootstrap: Option<&BootstrapOptions>) -> Result<TestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    check_len(a, 50)?;
    check_len(b, 50)?;
    let delta = sharpe(a)? - sharpe(b)?;
    let mom = sharpe_moments(a, b)?;
    let t = a.len() as f64;
    let var = (mom.grad.transpose() * parzen_lrv(&mom.centred) * mom.grad)[(0, 0)] / t;
    let se = var.max(0.0).sqrt();
    let stat = if delta == 0.0 {
        0.0
    } else if se > 0.0 {
        delta / se
    } else {
        f64::INFINITY.copysign(delta)
    };
    let mut p = normal_p(stat);
    if let Some(opts) = bootstrap {
        if delta != 0.0 && se > 0.0 {
            p = bootstrap_p(a, b, mom.diff, mom.diff / se, opts)?;
        }
    }
    Ok(TestResult { delta, stat, p })
}

/// Studentised circular block bootstrap p-value.
fn bootstrap_p(a: &[f64], b: &[f64], diff: f64, stat: f64, opts: &BootstrapOptions) -> Result<f64, StatsError> {
    let t = a.len();
    let l = opts.block.clamp(1, t);
    let blocks = t.div_ceil(l);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut exceed = 0usize;
    let mut aa = vec![0.0; blocks * l];
    let mut bb = vec![0.0; blocks * l];
    for _ in 0..opts.reps {
        for k in 0..blocks {
            let start = rng.random_range(0..t);
            for i in 0..l {
                aa[k * l + i] = a[(start + i) % t];
                bb[k * l + i] = b[(start + i) % t];
            }
        }
        let Ok(m) = sharpe_moments(&aa, &bb) else { continue };
        // block-sum long-run covariance
        let mut psi = Matrix4::zeros();
        for k in 0..blocks {
            let s = m.centred[k * l..(k + 1) * l].iter().fold(Vector4::zeros(), |acc, v| acc + v) / (l as f64).sqrt();
            psi += s * s.transpose();
        }
        psi /= blocks as f64;
        let se = ((m.grad.transpose() * psi * m.grad)[(0, 0)] / (blocks * l) as f64).sqrt();
        if se > 0.0 && ((m.diff - diff) / se).abs() >= stat.abs() {
            exceed += 1;
        }
    }
    Ok((exceed + 1) as f64 / (opts.reps + 1) as f64)
}

fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Brown–Forsythe F* on absolute deviations from the group medians.
/// `delta` is the difference of sample standard deviations.
pub fn brown_forsythe(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    check_len(a, 10)?;
    check_len(b, 10)?;
    let za: Vec<f64> = {
        let m = median(a);
        a.iter().map(|v| (v - m).abs()).collect()
    };
    let zb: Vec<f64> = {
        let m = median(b);
        b.iter().map(|v| (v - m).abs()).collect()
    };
    let (na, nb) = (za.len() as f64, zb.len() as f64);
    let (ma, mb) = (mean(&za), mean(&zb));
    let grand = (na * ma + nb * mb) / (na + nb);
    let between = na * (ma - grand).powi(2) + nb * (mb - grand).powi(2);
    let within: f64 = za.iter().map(|v| (v - ma).powi(2)).sum::<f64>() + zb.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
    let df2 = na + nb - 2.0;
    let f = if between == 0.0 {
        0.0
    } else if within > 0.0 {
        between / (within / df2)
    } else {
        f64::INFINITY
    };
    let p = if f == 0.0 {
        1.0
    } else if f.is_infinite() {
        0.0
    } else {
        FisherSnedecor::new(1.0, df2).expect("valid F").sf(f)
    };
    Ok(TestResult {
        delta: volatility(a)? - volatility(b)?,
        stat: f,
        p,
    })
}

/// `eₜ = wₜ'rₜ − wₜ'μ̄`.
pub fn forecast_errors(weights: &DMatrix<f64>, returns: &DMatrix<f64>, mean_returns: &DVector<f64>) -> Result<Vec<f64>, StatsError> {
    if weights.shape() != returns.shape() {
        return Err(StatsError::LengthMismatch(weights.nrows(), returns.nrows()));
    }
    if mean_returns.len() != weights.ncols() {
        return Err(StatsError::LengthMismatch(mean_returns.len(), weights.ncols()));
    }
    Ok((0..weights.nrows())
        .map(|t| {
            let w = weights.row(t);
            w.dot(&returns.row(t)) - w.transpose().dot(mean_returns)
        })
        .collect())
}

/// Newey–West lag `⌊4(n/100)^{2/9}⌋`.
pub fn newey_west_lag(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Diebold–Mariano test on `dₜ = e²_{a,t} − e²_{b,t}`. `delta` is the mean
/// loss differential, negative when `a` has smaller squared errors.
pub fn diebold_mariano(ea: &[f64], eb: &[f64]) -> Result<TestResult, StatsError> {
    if ea.len() != eb.len() {
        return Err(StatsError::LengthMismatch(ea.len(), eb.len()));
    }
    check_len(ea, 50)?;
    check_len(eb, 50)?;
    let d: Vec<f64> = ea.iter().zip(eb).map(|(a, b)| a * a - b * b).collect();
    let n = d.len();
    let dm = mean(&d);
    let lag = newey_west_lag(n).min(n - 1);
    let gamma = |j: usize| (j..n).map(|t| (d[t] - dm) * (d[t - j] - dm)).sum::<f64>() / n as f64;
    let mut lrv = gamma(0);
    for j in 1..=lag {
        lrv += 2.0 * (1.0 - j as f64 / (lag + 1) as f64) * gamma(j);
    }
    let var = lrv / n as f64;
    let stat = if dm == 0.0 {
        0.0
    } else if var > 0.0 {
        dm / var.sqrt()
    } else {
        f64::INFINITY.copysign(dm)
    };
    Ok(TestResult {
        delta: dm,
        stat,
        p: normal_p(stat),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    /// Use the bootstrap p-value for Sharpe-ratio tests.
    pub bootstrap: Option<BootstrapOptions>,
}

/// Metrics of one strategy series and its tests against 1/N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// `None` for the benchmark.
    pub model: Option<ModelId>,
    pub strategy: StrategyId,
    pub sharpe: f64,
    pub sharpe_net: f64,
    pub volatility: f64,
    pub p_sharpe: Option<f64>,
    pub p_sharpe_net: Option<f64>,
    pub p_vol_bf: Option<f64>,
    pub p_vol_dm: Option<f64>,
    pub better_sharpe: bool,
    pub better_sharpe_net: bool,
    pub better_vol: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub periods: usize,
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn benchmark(&self) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.model.is_none())
    }

    pub fn row(&self, model: ModelId, strategy: StrategyId) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.model == Some(model) && r.strategy == strategy)
    }
}

fn nan_if_err(r: Result<f64, StatsError>) -> f64 {
    r.unwrap_or(f64::NAN)
}

fn p_of(r: Result<TestResult, StatsError>, what: &str) -> Option<f64> {
    match r {
        Ok(t) => Some(t.p),
        Err(e) => {
            log::warn!("{what} test unavailable: {e}");
            None
        }
    }
}

/// Compute every criterion and test for every series of a backtest.
pub fn compute_metrics(dataset: &str, result: &BacktestResult, opts: &StatsOptions) -> MetricReport {
    let bench = &result.benchmark;
    let mu_bar = crate::linalg::column_means(&result.realized);
    let bench_err = forecast_errors(&bench.weights, &result.realized, &mu_bar).unwrap_or_default();
    let b_sharpe = nan_if_err(sharpe(&bench.gross));
    let b_sharpe_net = nan_if_err(sharpe(&bench.net));
    let b_vol = nan_if_err(volatility(&bench.gross));
    let mut rows = vec![MetricRow {
        model: None,
        strategy: StrategyId::Naive,
        sharpe: b_sharpe,
        sharpe_net: b_sharpe_net,
        volatility: b_vol,
        p_sharpe: None,
        p_sharpe_net: None,
        p_vol_bf: None,
        p_vol_dm: None,
        better_sharpe: false,
        better_sharpe_net: false,
        better_vol: false,
    }];
    let boot = opts.bootstrap.as_ref();
    for ((model, strategy), s) in &result.series {
        let sh = nan_if_err(sharpe(&s.gross));
        let shn = nan_if_err(sharpe(&s.net));
        let vol = nan_if_err(volatility(&s.gross));
        let err = forecast_errors(&s.weights, &result.realized, &mu_bar).unwrap_or_default();
        rows.push(MetricRow {
            model: Some(*model),
            strategy: *strategy,
            sharpe: sh,
            sharpe_net: shn,
            volatility: vol,
            p_sharpe: p_of(lw_sharpe_test(&s.gross, &bench.gross, boot), "Sharpe"),
            p_sharpe_net: p_of(lw_sharpe_test(&s.net, &bench.net, boot), "net Sharpe"),
            p_vol_bf: p_of(brown_forsythe(&s.gross, &bench.gross), "Brown-Forsythe"),
            p_vol_dm: p_of(diebold_mariano(&err, &bench_err), "Diebold-Mariano"),
            better_sharpe: sh > b_sharpe,
            better_sharpe_net: shn > b_sharpe_net,
            better_vol: vol < b_vol,
        });
    }
    MetricReport {
        dataset: dataset.to_string(),
        periods: result.dates.len(),
        rows,
    }
}
