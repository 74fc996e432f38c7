use std::collections::HashMap;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use super::scale::{period_groups, PeriodKey};
use super::{Frequency, IngestError, ReturnPanel};

/// Trailing daily periods attached to each window by default.
pub const DEFAULT_COMPANION_DEPTH: usize = 4;

/// One estimation window and the period it is used to invest over.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSlice {
    /// The M periods strictly preceding `target_index`.
    pub window: DMatrix<f64>,
    pub target_index: usize,
    pub target_date: NaiveDate,
    /// Daily return blocks of the last few window periods, oldest first.
    /// The final block belongs to the most recent completed period.
    pub daily_companion: Option<Vec<DMatrix<f64>>>,
}

impl WindowSlice {
    /// Build a slice directly from a window matrix (no calendar).
    pub fn from_window(window: DMatrix<f64>) -> Self {
        let target_index = window.nrows();
        Self {
            window,
            target_index,
            target_date: NaiveDate::MIN,
            daily_companion: None,
        }
    }

    pub fn with_daily(mut self, blocks: Vec<DMatrix<f64>>) -> Self {
        self.daily_companion = Some(blocks);
        self
    }

    pub fn n_obs(&self) -> usize {
        self.window.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.window.ncols()
    }
}

/// Lazily materialised sequence of the P − M rolling windows of a panel.
#[derive(Debug, Clone)]
pub struct RollingWindows<'a> {
    panel: &'a ReturnPanel,
    m: usize,
    daily: Option<(&'a ReturnPanel, Vec<std::ops::Range<usize>>)>,
    depth: usize,
}

/// Slice `panel` into rolling windows of length `m`, one per target period
/// `m..P`. When `daily` is given, every panel period is matched to its daily
/// rows by calendar key.
pub fn rolling_windows<'a>(
    panel: &'a ReturnPanel,
    m: usize,
    daily: Option<&'a ReturnPanel>,
) -> Result<RollingWindows<'a>, IngestError> {
    rolling_windows_with_depth(panel, m, daily, DEFAULT_COMPANION_DEPTH)
}

pub fn rolling_windows_with_depth<'a>(
    panel: &'a ReturnPanel,
    m: usize,
    daily: Option<&'a ReturnPanel>,
    depth: usize,
) -> Result<RollingWindows<'a>, IngestError> {
    if m == 0 {
        return Err(IngestError::Schema("window length must be positive".into()));
    }
    let p = panel.n_periods();
    if p <= m {
        return Err(IngestError::InsufficientHistory { periods: p, window: m });
    }
    let daily = match daily {
        None => None,
        Some(d) => Some((d, match_daily(panel, d, m, depth)?)),
    };
    Ok(RollingWindows {
        panel,
        m,
        daily,
        depth: depth.max(1),
    })
}

fn match_daily(
    panel: &ReturnPanel,
    daily: &ReturnPanel,
    m: usize,
    depth: usize,
) -> Result<Vec<std::ops::Range<usize>>, IngestError> {
    if daily.frequency() != Frequency::Daily {
        return Err(IngestError::Schema("daily companion must be a daily panel".into()));
    }
    if daily.n_assets() != panel.n_assets() {
        return Err(IngestError::Shape(format!(
            "daily panel has {} assets, periodic panel {}",
            daily.n_assets(),
            panel.n_assets()
        )));
    }
    let groups: HashMap<PeriodKey, std::ops::Range<usize>> = period_groups(daily, panel.frequency())
        .into_iter()
        .map(|g| (g.key, g.rows))
        .collect();
    let first_needed = m.saturating_sub(depth.max(1));
    panel
        .dates()
        .iter()
        .enumerate()
        .map(|(i, &d)| match groups.get(&PeriodKey::of(d, panel.frequency())) {
            Some(rows) => Ok(rows.clone()),
            None if i < first_needed => Ok(0..0),
            None => Err(IngestError::MissingDaily {
                date: d.to_string(),
            }),
        })
        .collect()
}

impl<'a> RollingWindows<'a> {
    pub fn len(&self) -> usize {
        self.panel.n_periods() - self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window_len(&self) -> usize {
        self.m
    }

    /// The k-th slice (target index `m + k`).
    pub fn slice(&self, k: usize) -> WindowSlice {
        let target = self.m + k;
        let window = self
            .panel
            .returns()
            .rows(target - self.m, self.m)
            .into_owned();
        let daily_companion = self.daily.as_ref().map(|(daily, ranges)| {
            let from = target.saturating_sub(self.depth).max(target - self.m);
            (from..target)
                .map(|i| {
                    let r = &ranges[i];
                    daily.returns().rows(r.start, r.len()).into_owned()
                })
                .collect()
        });
        WindowSlice {
            window,
            target_index: target,
            target_date: self.panel.dates()[target],
            daily_companion,
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = WindowSlice> + '_ {
        (0..self.len()).map(move |k| self.slice(k))
    }
}
