use std::fmt;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::IngestError;

/// Sampling frequency of a return panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Weekly,
    Monthly,
}

impl Frequency {
    pub fn as_str(self) -> &'static str {
        match self {
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
            Frequency::Monthly => "monthly",
        }
    }

    /// Guess the frequency from the median spacing of consecutive dates.
    pub fn infer(dates: &[NaiveDate]) -> Frequency {
        if dates.len() < 2 {
            return Frequency::Daily;
        }
        let mut gaps: Vec<i64> = dates
            .windows(2)
            .map(|w| (w[1] - w[0]).num_days())
            .collect();
        gaps.sort_unstable();
        let median = gaps[gaps.len() / 2];
        match median {
            i64::MIN..=4 => Frequency::Daily,
            5..=10 => Frequency::Weekly,
            _ => Frequency::Monthly,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Frequency {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "daily" | "d" => Ok(Frequency::Daily),
            "weekly" | "w" => Ok(Frequency::Weekly),
            "monthly" | "m" => Ok(Frequency::Monthly),
            other => Err(IngestError::Schema(format!("unknown frequency '{other}'"))),
        }
    }
}

/// A dated T×N matrix of simple per-period returns.
///
/// Rows are periods (strictly increasing dates), columns are assets. Every
/// cell is finite and strictly greater than -1.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    returns: DMatrix<f64>,
    frequency: Frequency,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        returns: DMatrix<f64>,
        frequency: Frequency,
    ) -> Result<Self, IngestError> {
        if returns.nrows() != dates.len() {
            return Err(IngestError::Shape(format!(
                "{} dates for {} return rows",
                dates.len(),
                returns.nrows()
            )));
        }
        if returns.ncols() != assets.len() {
            return Err(IngestError::Shape(format!(
                "{} asset labels for {} return columns",
                assets.len(),
                returns.ncols()
            )));
        }
        if assets.is_empty() {
            return Err(IngestError::Shape("panel has no assets".into()));
        }
        if let Some(pos) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(IngestError::Unordered {
                date: dates[pos + 1].to_string(),
            });
        }
        for (i, row) in returns.row_iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if !r.is_finite() {
                    return Err(IngestError::NonFinite {
                        row: i,
                        column: assets[j].clone(),
                    });
                }
                if r <= -1.0 {
                    return Err(IngestError::TotalLoss {
                        date: dates[i].to_string(),
                        column: assets[j].clone(),
                        value: r,
                    });
                }
            }
        }
        Ok(Self {
            dates,
            assets,
            returns,
            frequency,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    /// Number of periods (P).
    pub fn n_periods(&self) -> usize {
        self.dates.len()
    }

    /// Number of assets (N).
    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Write the panel as canonical CSV: `date,<asset>...` header, ISO dates,
    /// decimal returns in shortest round-trip form.
    pub fn write_canonical<W: std::io::Write>(&self, out: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = Vec::with_capacity(self.assets.len() + 1);
        header.push("date".to_string());
        header.extend(self.assets.iter().cloned());
        w.write_record(&header)?;
        for (i, date) in self.dates.iter().enumerate() {
            let mut rec = Vec::with_capacity(self.assets.len() + 1);
            rec.push(date.format("%Y-%m-%d").to_string());
            rec.extend(self.returns.row(i).iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_canonical_string(&self) -> Result<String, IngestError> {
        let mut buf = Vec::new();
        self.write_canonical(&mut buf)?;
        String::from_utf8(buf).map_err(|e| IngestError::Schema(e.to_string()))
    }

    /// Restrict to the rows whose date lies in `[from, to]`.
    pub fn between(&self, from: NaiveDate, to: NaiveDate) -> Result<ReturnPanel, IngestError> {
        let rows: Vec<usize> = (0..self.dates.len())
            .filter(|&i| self.dates[i] >= from && self.dates[i] <= to)
            .collect();
        let returns = self.returns.select_rows(rows.iter());
        let dates = rows.iter().map(|&i| self.dates[i]).collect();
        ReturnPanel::new(dates, self.assets.clone(), returns, self.frequency)
    }
}
