//! Return-panel ingestion, frequency scaling and rolling-window slicing.

mod ingest;
mod panel;
mod scale;
mod windows;

pub use ingest::{load_returns, Delimiter, Layout, LoadedPanel, Schema, Units};
pub use panel::{Frequency, ReturnPanel};
pub use scale::{aggregate, period_groups, scale_frequency, PeriodGroup, PeriodKey, ScaleMethod};
pub use windows::{
    rolling_windows, rolling_windows_with_depth, RollingWindows, WindowSlice,
    DEFAULT_COMPANION_DEPTH,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("input is empty")]
    Empty,
    #[error("schema error: {0}")]
    Schema(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("line {line}: unparseable date '{value}'")]
    BadDate { line: usize, value: String },
    #[error("line {line}, column '{column}': non-numeric cell '{value}'")]
    BadCell {
        line: usize,
        column: String,
        value: String,
    },
    #[error("need at least 2 asset columns, found {0}")]
    TooFewAssets(usize),
    #[error("dates not strictly increasing at {date}")]
    Unordered { date: String },
    #[error("row {row}, column '{column}': non-finite return")]
    NonFinite { row: usize, column: String },
    #[error("{date}, column '{column}': return {value} is a loss of 100% or more")]
    TotalLoss {
        date: String,
        column: String,
        value: f64,
    },
    #[error("insufficient history: {periods} periods for window length {window}")]
    InsufficientHistory { periods: usize, window: usize },
    #[error("no daily returns cover the period ending {date}")]
    MissingDaily { date: String },
}
