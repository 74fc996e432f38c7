//! Portfolio rules: 1/N, minimum variance with and without short sales,
//! volatility timing and the tangency portfolio.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StrategyError {
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),
    #[error("tangency undefined: 1'Σ⁻¹μ = {0}")]
    TangencyUndefined(f64),
    #[error("nonpositive variance for asset {0}")]
    NonPositiveVariance(usize),
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyId {
    Naive,
    Mvp,
    ConMvp,
    Vt,
    Tp,
}

impl StrategyId {
    pub const ALL: [StrategyId; 5] = [
        StrategyId::Naive,
        StrategyId::Mvp,
        StrategyId::ConMvp,
        StrategyId::Vt,
        StrategyId::Tp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Naive => "NAIVE",
            StrategyId::Mvp => "MVP",
            StrategyId::ConMvp => "CON_MVP",
            StrategyId::Vt => "VT",
            StrategyId::Tp => "TP",
        }
    }

    pub fn long_only(self) -> bool {
        matches!(self, StrategyId::Naive | StrategyId::ConMvp | StrategyId::Vt)
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().replace('-', "_");
        StrategyId::ALL
            .iter()
            .copied()
            .find(|m| m.as_str().eq_ignore_ascii_case(&t))
            .ok_or_else(|| format!("unknown strategy '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: DVector<f64>,
    pub strategy: StrategyId,
    /// Set when the tangency denominator `1'Σ⁻¹μ` was negative.
    pub negative_denominator: bool,
}

impl WeightVector {
    fn new(weights: DVector<f64>, strategy: StrategyId) -> Self {
        Self {
            weights,
            strategy,
            negative_denominator: false,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(v: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in v {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn normalize(mut w: DVector<f64>) -> DVector<f64> {
    let s = compensated_sum(w.iter().copied());
    w /= s;
    w
}

fn check_square(sigma: &DMatrix<f64>) -> Result<(), StrategyError> {
    if !sigma.is_square() || sigma.nrows() == 0 {
        return Err(StrategyError::Shape(format!("covariance is {}x{}", sigma.nrows(), sigma.ncols())));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(StrategyError::DegenerateCovariance("non-finite entries".into()));
    }
    Ok(())
}

fn solve(sigma: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, StrategyError> {
    let b = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let (x, _) = linalg::spd_solve_ridge(sigma, &b)
        .ok_or_else(|| StrategyError::DegenerateCovariance("factorisation failed".into()))?;
    Ok(x.column(0).into_owned())
}

pub fn naive_weights(n: usize) -> WeightVector {
    WeightVector::new(DVector::from_element(n, 1.0 / n as f64), StrategyId::Naive)
}

/// `Σ⁻¹1 / 1'Σ⁻¹1` by a Cholesky solve.
pub fn mvp_weights(sigma: &DMatrix<f64>) -> Result<WeightVector, StrategyError> {
    check_square(sigma)?;
    let n = sigma.nrows();
    let x = solve(sigma, &DVector::from_element(n, 1.0))?;
    let denom = compensated_sum(x.iter().copied());
    if !(denom > 1e-12) || !denom.is_finite() {
        return Err(StrategyError::DegenerateCovariance(format!("1'Σ⁻¹1 = {denom}")));
    }
    Ok(WeightVector::new(normalize(x), StrategyId::Mvp))
}

/// Solve `min w'Σw` s.t. `1'w = 1`, `w_i = 0` off `free`. Returns full-length
/// weights and the multiplier `λ = w'Σw` (the common value of `(Σw)_i` on the
/// free set).
fn solve_on_support(sigma: &DMatrix<f64>, free: &[usize]) -> Option<(DVector<f64>, f64)> {
    let k = free.len();
    let sub = DMatrix::from_fn(k, k, |i, j| sigma[(free[i], free[j])]);
    let b = DMatrix::from_element(k, 1, 1.0);
    let (x, _) = linalg::spd_solve_ridge(&sub, &b)?;
    let denom: f64 = x.iter().sum();
    if !(denom > 0.0) || !denom.is_finite() {
        return None;
    }
    let mut w = DVector::zeros(sigma.nrows());
    for (i, &f) in free.iter().enumerate() {
        w[f] = x[(i, 0)] / denom;
    }
    Some((w, 1.0 / denom))
}

/// KKT check for the long-only minimum-variance problem.
pub fn kkt_holds(sigma: &DMatrix<f64>, w: &DVector<f64>, tol: f64) -> bool {
    let g = sigma * w;
    let lambda = w.dot(&g);
    let scale = lambda.abs().max(sigma.diagonal().amax()).max(f64::MIN_POSITIVE);
    (0..w.len()).all(|i| {
        if w[i] > 0.0 {
            (g[i] - lambda).abs() <= tol * scale
        } else {
            g[i] >= lambda - tol * scale
        }
    })
}

/// Minimum variance over the simplex by a primal active-set method started
/// at 1/N.
pub fn con_mvp_weights(sigma: &DMatrix<f64>) -> Result<WeightVector, StrategyError> {
    check_square(sigma)?;
    let n = sigma.nrows();
    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut free: Vec<usize> = (0..n).collect();
    let max_iter = 10 * n * n + 50;
    for _ in 0..max_iter {
        // step towards the equality-constrained optimum on the free set
        let (target, _) = solve_on_support(sigma, &free)
            .ok_or_else(|| StrategyError::DegenerateCovariance("singular free block".into()))?;
        let mut step = 1.0f64;
        let mut blocking = None;
        for &i in &free {
            let d = target[i] - w[i];
            if d < 0.0 {
                let s = -w[i] / d;
                if s < step {
                    step = s;
                    blocking = Some(i);
                }
            }
        }
        w += (&target - &w) * step;
        if let Some(b) = blocking {
            w[b] = 0.0;
            free.retain(|&i| i != b);
            continue;
        }
        // at the free-set optimum; release the most violated bound, if any
        let g = sigma * &w;
        let lambda = w.dot(&g);
        let scale = lambda.abs().max(sigma.diagonal().amax()).max(f64::MIN_POSITIVE);
        let worst = (0..n)
            .filter(|i| !free.contains(i))
            .map(|i| (i, g[i] - lambda))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match worst {
            Some((i, v)) if v < -1e-9 * scale => {
                free.push(i);
                free.sort_unstable();
            }
            _ => break,
        }
    }
    w.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0;
        }
    });
    Ok(WeightVector::new(normalize(w), StrategyId::ConMvp))
}

/// Inverse-variance weights.
pub fn vt_weights(sigma: &DMatrix<f64>) -> Result<WeightVector, StrategyError> {
    check_square(sigma)?;
    let d = sigma.diagonal();
    if let Some(i) = d.iter().position(|v| !(*v > 0.0)) {
        return Err(StrategyError::NonPositiveVariance(i));
    }
    Ok(WeightVector::new(normalize(d.map(|v| 1.0 / v)), StrategyId::Vt))
}

/// `Σ⁻¹μ / 1'Σ⁻¹μ`. A negative denominator is kept and flagged.
pub fn tp_weights(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<WeightVector, StrategyError> {
    check_square(sigma)?;
    if mu.len() != sigma.nrows() {
        return Err(StrategyError::Shape(format!("mu has {} entries for {} assets", mu.len(), sigma.nrows())));
    }
    let x = solve(sigma, mu)?;
    let denom = compensated_sum(x.iter().copied());
    if !(denom.abs() > 1e-12) || !denom.is_finite() {
        return Err(StrategyError::TangencyUndefined(denom));
    }
    let mut w = WeightVector::new(normalize(x), StrategyId::Tp);
    w.negative_denominator = denom < 0.0;
    Ok(w)
}

/// Dispatch on the strategy id.
pub fn weights_for(strategy: StrategyId, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<WeightVector, StrategyError> {
    match strategy {
        StrategyId::Naive => Ok(naive_weights(sigma.nrows())),
        StrategyId::Mvp => mvp_weights(sigma),
        StrategyId::ConMvp => con_mvp_weights(sigma),
        StrategyId::Vt => vt_weights(sigma),
        StrategyId::Tp => tp_weights(mu, sigma),
    }
}
