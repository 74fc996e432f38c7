//! Delimited-text ingestion, including the Kenneth French library layout.
//!
//! French files carry a free-text preamble, one or more blocks of
//! `header + data rows` (value-weighted first, then equal-weighted, ...),
//! dates as `YYYYMMDD` or `YYYYMM`, returns in percent, and `-99.99` /
//! `-999` for missing cells.

use std::io::Read;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Frequency, IngestError, ReturnPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    Comma,
    Whitespace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Percent,
    Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One header line followed by data rows.
    Plain,
    /// Preamble text, then blocks of header + data; `block` picks which one
    /// (0 = the first block, value-weighted in the French files).
    KennethFrench { block: usize },
}

/// Column mapping and conventions for [`load_returns`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub layout: Layout,
    pub delimiter: Delimiter,
    /// Zero-based index of the date column.
    pub date_column: usize,
    /// Asset columns by header name; `None` takes every non-date column.
    pub asset_columns: Option<Vec<String>>,
    pub units: Units,
    /// Raw cell values (before unit conversion) that mark a missing cell.
    pub missing_sentinels: Vec<f64>,
    /// Forced frequency; inferred from the date format / spacing when `None`.
    pub frequency: Option<Frequency>,
}

impl Schema {
    /// The canonical interchange format written by [`ReturnPanel::write_canonical`].
    pub fn canonical() -> Self {
        Self {
            layout: Layout::Plain,
            delimiter: Delimiter::Comma,
            date_column: 0,
            asset_columns: None,
            units: Units::Decimal,
            missing_sentinels: Vec::new(),
            frequency: None,
        }
    }

    /// Kenneth French CSV files (percent returns, -99.99/-999 sentinels).
    pub fn kenneth_french(block: usize) -> Self {
        Self {
            layout: Layout::KennethFrench { block },
            delimiter: Delimiter::Comma,
            date_column: 0,
            asset_columns: None,
            units: Units::Percent,
            missing_sentinels: vec![-99.99, -999.0],
            frequency: None,
        }
    }
}

/// A loaded panel plus the number of rows dropped for missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPanel {
    pub panel: ReturnPanel,
    pub dropped_rows: usize,
}

/// Parse a return file into a decimal-unit [`ReturnPanel`].
pub fn load_returns<R: Read>(mut source: R, schema: &Schema) -> Result<LoadedPanel, IngestError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .collect();

    let (header, body) = match &schema.layout {
        Layout::Plain => plain_block(&lines)?,
        Layout::KennethFrench { block } => french_block(&lines, schema.delimiter, *block)?,
    };

    let header_fields = split(header.1, schema.delimiter);
    let columns = select_columns(&header_fields, schema)?;
    if columns.len() < 2 {
        return Err(IngestError::TooFewAssets(columns.len()));
    }
    let assets: Vec<String> = columns
        .iter()
        .map(|&c| header_fields[c].trim().to_string())
        .collect();

    let mut dates = Vec::with_capacity(body.len());
    let mut values: Vec<f64> = Vec::with_capacity(body.len() * columns.len());
    let mut dropped = 0usize;
    let mut date_kind = None;
    for &(line_no, line) in &body {
        let fields = split(line, schema.delimiter);
        let raw_date = fields
            .get(schema.date_column)
            .ok_or_else(|| IngestError::BadDate {
                line: line_no,
                value: String::new(),
            })?
            .trim();
        let (date, kind) = parse_date(raw_date).ok_or_else(|| IngestError::BadDate {
            line: line_no,
            value: raw_date.to_string(),
        })?;
        date_kind.get_or_insert(kind);

        let mut row = Vec::with_capacity(columns.len());
        let mut missing = false;
        for (k, &c) in columns.iter().enumerate() {
            let cell = fields.get(c).map(|s| s.trim()).unwrap_or("");
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
            {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| IngestError::BadCell {
                line: line_no,
                column: assets[k].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(IngestError::BadCell {
                    line: line_no,
                    column: assets[k].clone(),
                    value: cell.to_string(),
                });
            }
            if schema
                .missing_sentinels
                .iter()
                .any(|s| (v - s).abs() <= 1e-9 * s.abs().max(1.0))
            {
                missing = true;
                continue;
            }
            row.push(match schema.units {
                Units::Percent => v / 100.0,
                Units::Decimal => v,
            });
        }
        if missing {
            dropped += 1;
            continue;
        }
        dates.push(date);
        values.extend(row);
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with missing values");
    }

    let frequency = schema.frequency.unwrap_or(match date_kind {
        Some(DateKind::YearMonth) => Frequency::Monthly,
        Some(DateKind::Compact) => Frequency::Daily,
        _ => Frequency::infer(&dates),
    });
    let returns = DMatrix::from_row_slice(dates.len(), assets.len(), &values);
    let panel = ReturnPanel::new(dates, assets, returns, frequency)?;
    Ok(LoadedPanel {
        panel,
        dropped_rows: dropped,
    })
}

type Line<'a> = (usize, &'a str);

fn plain_block<'a>(lines: &[Line<'a>]) -> Result<(Line<'a>, Vec<Line<'a>>), IngestError> {
    let mut it = lines.iter().filter(|(_, l)| !l.trim().is_empty());
    let header = *it.next().ok_or(IngestError::Empty)?;
    Ok((header, it.copied().collect()))
}

fn starts_with_digit(line: &str) -> bool {
    line.trim_start().chars().next().is_some_and(|c| c.is_ascii_digit())
}

fn french_block<'a>(
    lines: &[Line<'a>],
    delimiter: Delimiter,
    block: usize,
) -> Result<(Line<'a>, Vec<Line<'a>>), IngestError> {
    let mut seen = 0usize;
    let mut i = 0usize;
    while i + 1 < lines.len() {
        let (_, line) = lines[i];
        let fields = split(line, delimiter);
        let is_header = !starts_with_digit(line)
            && fields.len() >= 2
            && starts_with_digit(lines[i + 1].1)
            && fields[1..].iter().any(|f| !f.trim().is_empty());
        if is_header {
            let body: Vec<Line<'a>> = lines[i + 1..]
                .iter()
                .take_while(|(_, l)| starts_with_digit(l))
                .copied()
                .collect();
            if seen == block {
                return Ok((lines[i], body));
            }
            seen += 1;
            i += body.len() + 1;
        } else {
            i += 1;
        }
    }
    Err(IngestError::Schema(format!(
        "data block {block} not found ({seen} blocks present)"
    )))
}

fn split(line: &str, delimiter: Delimiter) -> Vec<&str> {
    match delimiter {
        Delimiter::Comma => line.split(',').collect(),
        Delimiter::Whitespace => line.split_whitespace().collect(),
    }
}

fn select_columns(header: &[&str], schema: &Schema) -> Result<Vec<usize>, IngestError> {
    match &schema.asset_columns {
        None => Ok((0..header.len())
            .filter(|&c| c != schema.date_column)
            .collect()),
        Some(names) => names
            .iter()
            .map(|name| {
                header
                    .iter()
                    .position(|h| h.trim() == name.as_str())
                    .ok_or_else(|| IngestError::Schema(format!("column '{name}' not in header")))
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DateKind {
    Compact,
    YearMonth,
    Iso,
}

fn parse_date(s: &str) -> Option<(NaiveDate, DateKind)> {
    if s.len() == 8 && s.bytes().all(|b| b.is_ascii_digit()) {
        return NaiveDate::parse_from_str(s, "%Y%m%d")
            .ok()
            .map(|d| (d, DateKind::Compact));
    }
    if s.len() == 6 && s.bytes().all(|b| b.is_ascii_digit()) {
        let year: i32 = s[..4].parse().ok()?;
        let month: u32 = s[4..].parse().ok()?;
        return last_day_of_month(year, month).map(|d| (d, DateKind::YearMonth));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .map(|d| (d, DateKind::Iso))
}

/// Monthly periods are stamped with the last calendar day of the month.
pub(crate) fn last_day_of_month(year: i32, month: u32) -> Option<NaiveDate> {
    let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    NaiveDate::from_ymd_opt(ny, nm, 1)?.pred_opt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn percent_schema() -> Schema {
        Schema {
            units: Units::Percent,
            missing_sentinels: vec![-99.99],
            ..Schema::canonical()
        }
    }

    #[test]
    fn percent_units_are_divided_by_100() {
        let text = "date,A,B\n20200102,1.00,-0.50\n20200103,0.0,0.0\n20200106,2,3\n";
        let loaded = load_returns(text.as_bytes(), &percent_schema()).unwrap();
        let r = loaded.panel.returns();
        assert_eq!(r[(0, 0)], 0.01);
        assert_eq!(r[(0, 1)], -0.005);
        assert_eq!(loaded.dropped_rows, 0);
        assert_eq!(loaded.panel.frequency(), Frequency::Daily);
    }

    #[test]
    fn sentinel_rows_are_dropped_and_counted() {
        let text = "date,A,B\n20200102,1.00,-0.50\n20200103,-99.99,0.1\n20200106,2,3\n";
        let loaded = load_returns(text.as_bytes(), &percent_schema()).unwrap();
        assert_eq!(loaded.dropped_rows, 1);
        assert_eq!(loaded.panel.n_periods(), 2);
        assert_eq!(
            loaded.panel.dates()[1],
            NaiveDate::from_ymd_opt(2020, 1, 6).unwrap()
        );
    }

    #[test]
    fn compact_daily_dates_parse_in_order() {
        let text = "date,A,B\n19630701,0.1,0.2\n19630702,0.3,0.1\n19630703,-0.2,0.0\n";
        let loaded = load_returns(text.as_bytes(), &percent_schema()).unwrap();
        let d = loaded.panel.dates();
        assert!(d.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(d[0], NaiveDate::from_ymd_opt(1963, 7, 1).unwrap());
        assert_eq!(loaded.panel.frequency(), Frequency::Daily);
    }

    #[test]
    fn bad_date_names_the_line() {
        let text = "date,A,B\n20200102,1,2\n2020x103,1,2\n";
        match load_returns(text.as_bytes(), &percent_schema()) {
            Err(IngestError::BadDate { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_names_line_and_column() {
        let text = "date,A,B\n20200102,1,2\n20200103,1,abc\n";
        match load_returns(text.as_bytes(), &percent_schema()) {
            Err(IngestError::BadCell { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "B");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_asset_file_is_rejected() {
        let text = "date,A\n20200102,1\n20200103,2\n";
        assert!(matches!(
            load_returns(text.as_bytes(), &percent_schema()),
            Err(IngestError::TooFewAssets(1))
        ));
    }

    #[test]
    fn total_loss_is_rejected() {
        let text = "date,A,B\n20200102,-100,2\n";
        assert!(matches!(
            load_returns(text.as_bytes(), &percent_schema()),
            Err(IngestError::TotalLoss { .. })
        ));
    }

    #[test]
    fn french_layout_reads_first_block() {
        let text = "\
This file was created by CMPT_IND_RETS using the 202312 CRSP database.
It contains value- and equal-weighted returns for 3 industry portfolios.

  Average Value Weighted Returns -- Daily
,NoDur,Durbl,Manuf
19260701,   0.56,   -0.52,   0.95
19260702,  -0.02,    0.06,  -99.99
19260706,   0.10,    0.20,   0.30

  Average Equal Weighted Returns -- Daily
,NoDur,Durbl,Manuf
19260701,   9.00,    9.00,   9.00
";
        let loaded = load_returns(text.as_bytes(), &Schema::kenneth_french(0)).unwrap();
        assert_eq!(loaded.panel.assets(), &["NoDur", "Durbl", "Manuf"]);
        assert_eq!(loaded.panel.n_periods(), 2);
        assert_eq!(loaded.dropped_rows, 1);
        assert!((loaded.panel.returns()[(0, 2)] - 0.0095).abs() < 1e-15);

        let ew = load_returns(text.as_bytes(), &Schema::kenneth_french(1)).unwrap();
        assert_eq!(ew.panel.returns()[(0, 0)], 0.09);
    }

    #[test]
    fn monthly_dates_are_month_ends() {
        let text = ",A,B\n196307,1,2\n196308,1,2\n196402,1,2\n";
        let loaded = load_returns(text.as_bytes(), &Schema::kenneth_french(0)).unwrap();
        assert_eq!(loaded.panel.frequency(), Frequency::Monthly);
        assert_eq!(
            loaded.panel.dates()[2],
            NaiveDate::from_ymd_opt(1964, 2, 29).unwrap()
        );
    }

    #[test]
    fn whitespace_delimited() {
        let text = "date A B\n20200102 1 2\n20200103 3 4\n";
        let schema = Schema {
            delimiter: Delimiter::Whitespace,
            ..percent_schema()
        };
        let loaded = load_returns(text.as_bytes(), &schema).unwrap();
        assert_eq!(loaded.panel.returns()[(1, 1)], 0.04);
    }
}
