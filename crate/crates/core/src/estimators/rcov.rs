//! Realized covariance from daily returns.

use nalgebra::DMatrix;

use super::EstimateError;

/// Trailing periods averaged when smoothing is on.
pub const SMOOTHING_PERIODS: usize = 4;

/// Sum of daily outer products over one period. Returns are not demeaned.
pub fn realized_cov(days: &DMatrix<f64>) -> DMatrix<f64> {
    days.transpose() * days
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcovEstimate {
    pub sigma: DMatrix<f64>,
    /// The most recent period had fewer than two days and the one before it
    /// was used instead.
    pub fell_back: bool,
    pub periods_used: usize,
}

/// Random-walk forecast from the trailing daily blocks (oldest first).
pub fn rcov_from_blocks(blocks: &[DMatrix<f64>], smooth: bool) -> Result<RcovEstimate, EstimateError> {
    let Some(last) = blocks.last() else {
        return Err(EstimateError::MissingDaily);
    };
    if smooth {
        let used = &blocks[blocks.len().saturating_sub(SMOOTHING_PERIODS)..];
        let n = last.ncols();
        let sum = used.iter().fold(DMatrix::zeros(n, n), |acc, b| acc + realized_cov(b));
        return Ok(RcovEstimate {
            sigma: sum / used.len() as f64,
            fell_back: false,
            periods_used: used.len(),
        });
    }
    if last.nrows() >= 2 {
        return Ok(RcovEstimate {
            sigma: realized_cov(last),
            fell_back: false,
            periods_used: 1,
        });
    }
    let prev = blocks.iter().rev().skip(1).find(|b| b.nrows() >= 1);
    match prev {
        Some(b) => Ok(RcovEstimate {
            sigma: realized_cov(b),
            fell_back: true,
            periods_used: 1,
        }),
        None => Ok(RcovEstimate {
            sigma: realized_cov(last),
            fell_back: true,
            periods_used: 1,
        }),
    }
}
