use std::ops::Range;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Frequency, IngestError, ReturnPanel};

/// How daily returns are collapsed into one lower-frequency return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMethod {
    /// `Π(1+r_j)^(1/ND) - 1`: the geometric mean daily return of the period.
    #[default]
    PerDayGeometric,
    /// `Π(1+r_j) - 1`: the compounded period return.
    Compound,
}

/// Calendar bucket a date belongs to at a given frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PeriodKey {
    Day(NaiveDate),
    /// ISO year and ISO week number.
    Week(i32, u32),
    Month(i32, u32),
}

impl PeriodKey {
    pub fn of(date: NaiveDate, frequency: Frequency) -> Self {
        match frequency {
            Frequency::Daily => PeriodKey::Day(date),
            Frequency::Weekly => {
                let w = date.iso_week();
                PeriodKey::Week(w.year(), w.week())
            }
            Frequency::Monthly => PeriodKey::Month(date.year(), date.month()),
        }
    }
}

/// A run of consecutive daily rows sharing one period key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodGroup {
    pub key: PeriodKey,
    /// Last trading day in the group; stamps the aggregated period.
    pub last_date: NaiveDate,
    pub rows: Range<usize>,
}

/// Group the rows of a daily panel into weekly or monthly periods.
pub fn period_groups(daily: &ReturnPanel, target: Frequency) -> Vec<PeriodGroup> {
    let dates = daily.dates();
    let mut groups: Vec<PeriodGroup> = Vec::new();
    for (i, &d) in dates.iter().enumerate() {
        let key = PeriodKey::of(d, target);
        match groups.last_mut() {
            Some(g) if g.key == key => {
                g.rows.end = i + 1;
                g.last_date = d;
            }
            _ => groups.push(PeriodGroup {
                key,
                last_date: d,
                rows: i..i + 1,
            }),
        }
    }
    groups
}

/// Aggregate a daily panel to weekly or monthly returns.
///
/// Weeks are ISO weeks truncated to trading days and stamped by their last
/// trading day; months are calendar months. Periods with fewer trading days
/// (holidays) use their actual day count.
pub fn scale_frequency(
    panel: &ReturnPanel,
    target: Frequency,
    method: ScaleMethod,
) -> Result<ReturnPanel, IngestError> {
    if panel.frequency() != Frequency::Daily {
        return Err(IngestError::Schema(format!(
            "scale_frequency needs a daily panel, got {}",
            panel.frequency()
        )));
    }
    if target == Frequency::Daily {
        return Ok(panel.clone());
    }
    let n = panel.n_assets();
    let r = panel.returns();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for g in period_groups(panel, target) {
        if g.rows.is_empty() {
            log::warn!("skipping empty period {:?}", g.key);
            continue;
        }
        dates.push(g.last_date);
        for j in 0..n {
            let days: Vec<f64> = g.rows.clone().map(|i| r[(i, j)]).collect();
            values.push(aggregate(&days, method));
        }
    }
    let returns = DMatrix::from_row_slice(dates.len(), n, &values);
    ReturnPanel::new(dates, panel.assets().to_vec(), returns, target)
}

/// Collapse one asset's daily returns for a single period.
pub fn aggregate(days: &[f64], method: ScaleMethod) -> f64 {
    let log_growth: f64 = days.iter().map(|r| r.ln_1p()).sum();
    match method {
        ScaleMethod::PerDayGeometric => (log_growth / days.len() as f64).exp_m1(),
        ScaleMethod::Compound => log_growth.exp_m1(),
    }
}
