//! Configuration-driven runs, result tables and plot data.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backtest::{run_backtest, sha256_file, write_result_csvs, BacktestConfig, BacktestError, FallbackEntry};
use crate::data::{
    load_returns, scale_frequency, Delimiter, Frequency, IngestError, ReturnPanel, ScaleMethod, Schema, Units,
};
use crate::estimators::{ModelConfig, ModelId};
use crate::stats::{compute_metrics, MetricReport, MetricRow, StatsOptions};
use crate::strategies::StrategyId;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Data(_) => 3,
            RunError::Internal(_) => 4,
        }
    }
}

impl From<BacktestError> for RunError {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::Config(m) => RunError::Config(m),
            BacktestError::Ingest(e) => RunError::Data(e.to_string()),
            other => RunError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Markdown,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Sharpe,
    SharpeNet,
    Vol,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Sharpe, Criterion::SharpeNet, Criterion::Vol];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Sharpe => "sharpe",
            Criterion::SharpeNet => "sharpe_net",
            Criterion::Vol => "vol",
        }
    }

    fn value(self, r: &MetricRow) -> f64 {
        match self {
            Criterion::Sharpe => r.sharpe,
            Criterion::SharpeNet => r.sharpe_net,
            Criterion::Vol => r.volatility,
        }
    }

    fn p(self, r: &MetricRow) -> Option<f64> {
        match self {
            Criterion::Sharpe => r.p_sharpe,
            Criterion::SharpeNet => r.p_sharpe_net,
            Criterion::Vol => r.p_vol_bf,
        }
    }

    fn better(self, r: &MetricRow) -> bool {
        match self {
            Criterion::Sharpe => r.better_sharpe,
            Criterion::SharpeNet => r.better_sharpe_net,
            Criterion::Vol => r.better_vol,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sharpe" => Ok(Criterion::Sharpe),
            "sharpe_net" | "sharpe-net" => Ok(Criterion::SharpeNet),
            "vol" | "volatility" => Ok(Criterion::Vol),
            other => Err(format!("unknown criterion '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutName {
    #[default]
    Plain,
    KennethFrench,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Resolved against the configuration file's directory when relative.
    pub path: PathBuf,
    #[serde(default)]
    pub layout: LayoutName,
    #[serde(default)]
    pub block: usize,
    pub delimiter: Option<Delimiter>,
    pub units: Option<Units>,
    #[serde(default)]
    pub date_column: usize,
    pub assets: Option<Vec<String>>,
    pub sentinels: Option<Vec<f64>>,
    /// Frequency to backtest at; daily input is scaled to it.
    pub frequency: Option<Frequency>,
    #[serde(default)]
    pub scaling: ScaleMethod,
    /// `value` or `equal`; recorded only.
    pub weighting: Option<String>,
    /// Inclusive ISO date bounds applied to the raw input.
    pub from: Option<String>,
    pub to: Option<String>,
}

impl DatasetConfig {
    pub fn schema(&self) -> Schema {
        let mut s = match self.layout {
            LayoutName::Plain => Schema::canonical(),
            LayoutName::KennethFrench => Schema::kenneth_french(self.block),
        };
        if let Some(d) = self.delimiter {
            s.delimiter = d;
        }
        if let Some(u) = self.units {
            s.units = u;
        }
        if let Some(v) = &self.sentinels {
            s.missing_sentinels = v.clone();
        }
        s.date_column = self.date_column;
        s.asset_columns = self.assets.clone();
        s
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Markdown, Format::Json]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default)]
    pub backtest: BacktestConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub stats: StatsOptions,
    pub dataset: BTreeMap<String, DatasetConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.dataset.is_empty() {
            return Err(RunError::Config("no [dataset.*] sections".into()));
        }
        if self.backtest.models.is_empty() {
            return Err(RunError::Config("select at least one model".into()));
        }
        if self.backtest.strategies.is_empty() {
            return Err(RunError::Config("select at least one strategy".into()));
        }
        self.backtest.validate().map_err(|e| RunError::Config(e.to_string()))?;
        self.model.validate().map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub formats: Option<Vec<Format>>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub source: PathBuf,
    pub dropped_rows: usize,
    pub periods: usize,
    pub assets: Vec<String>,
    pub frequency: Frequency,
    pub weighting: Option<String>,
    pub metrics: PathBuf,
    pub files: BTreeMap<String, String>,
    pub fallback_log: Vec<FallbackEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub created_unix: u64,
    pub datasets: Vec<DatasetManifest>,
    /// Report file name → sha256.
    pub reports: BTreeMap<String, String>,
}

fn parse_date(s: &Option<String>, what: &str) -> Result<Option<NaiveDate>, RunError> {
    s.as_ref()
        .map(|v| {
            NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|e| RunError::Config(format!("{what} date '{v}': {e}")))
        })
        .transpose()
}

fn data_err(path: &Path, e: IngestError) -> RunError {
    RunError::Data(format!("{}: {e}", path.display()))
}

/// Load, trim and scale one dataset. Returns the backtest panel, the daily
/// panel (when the source was daily) and the dropped row count.
pub fn prepare_dataset(
    ds: &DatasetConfig,
    base: &Path,
) -> Result<(ReturnPanel, Option<ReturnPanel>, usize), RunError> {
    let path = if ds.path.is_absolute() {
        ds.path.clone()
    } else {
        base.join(&ds.path)
    };
    let file = fs::File::open(&path).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))?;
    let loaded = load_returns(std::io::BufReader::new(file), &ds.schema()).map_err(|e| data_err(&path, e))?;
    let mut panel = loaded.panel;
    let from = parse_date(&ds.from, "from")?;
    let to = parse_date(&ds.to, "to")?;
    if from.is_some() || to.is_some() {
        panel = panel
            .between(from.unwrap_or(NaiveDate::MIN), to.unwrap_or(NaiveDate::MAX))
            .map_err(|e| data_err(&path, e))?;
    }
    let target = ds.frequency.unwrap_or(panel.frequency());
    if target == panel.frequency() {
        let daily = (target == Frequency::Daily).then(|| panel.clone());
        return Ok((panel, daily, loaded.dropped_rows));
    }
    if panel.frequency() != Frequency::Daily {
        return Err(RunError::Config(format!(
            "{}: cannot scale {} data to {target}",
            path.display(),
            panel.frequency()
        )));
    }
    let scaled = scale_frequency(&panel, target, ds.scaling).map_err(|e| data_err(&path, e))?;
    Ok((scaled, Some(panel), loaded.dropped_rows))
}

/// Significance outcome of one cell relative to the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Better5,
    Better10,
    Insignificant,
    Worse,
}

impl Outcome {
    pub fn classify(p: Option<f64>, better: bool) -> Outcome {
        match p {
            Some(p) if p <= 0.05 && better => Outcome::Better5,
            Some(p) if p <= 0.10 && better => Outcome::Better10,
            Some(p) if p <= 0.10 => Outcome::Worse,
            _ => Outcome::Insignificant,
        }
    }

    /// Score contribution in thirds.
    fn thirds(self) -> i64 {
        match self {
            Outcome::Better5 => 3,
            Outcome::Better10 => 2,
            Outcome::Insignificant => 0,
            Outcome::Worse => -3,
        }
    }
}

/// A score that is always a multiple of 1/3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score {
    pub thirds: i64,
}

impl Score {
    pub fn value(self) -> f64 {
        self.thirds as f64 / 3.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.thirds % 3 == 0 {
            write!(f, "{}", self.thirds / 3)
        } else {
            write!(f, "{}/3", self.thirds)
        }
    }
}

pub fn consistency_score(outcomes: &[Outcome]) -> Score {
    Score {
        thirds: outcomes.iter().map(|o| o.thirds()).sum(),
    }
}

pub fn stars(p: f64) -> &'static str {
    if p <= 0.01 {
        "***"
    } else if p <= 0.05 {
        "**"
    } else if p <= 0.10 {
        "*"
    } else {
        ""
    }
}

/// One table cell: three decimals, stars when significant, parentheses when
/// significantly worse than the benchmark.
pub fn format_cell(value: f64, p: Option<f64>, better: bool) -> String {
    let v = format!("{value:.3}");
    match p {
        Some(p) if p <= 0.10 => {
            if better {
                format!("{v}{}", stars(p))
            } else {
                format!("({v}{})", stars(p))
            }
        }
        _ => v,
    }
}

/// Rows of a table: label, score and cells (one per report).
pub struct TableRows {
    pub header: Vec<String>,
    pub rows: Vec<(String, Option<Score>, Vec<String>)>,
}

fn table_rows(reports: &[MetricReport], criterion: Criterion, strategy: StrategyId) -> TableRows {
    let header = reports.iter().map(|r| r.dataset.clone()).collect();
    let mut rows = Vec::new();
    rows.push((
        "Naive".to_string(),
        None,
        reports
            .iter()
            .map(|r| {
                r.benchmark()
                    .map(|b| format!("{:.3}", criterion.value(b)))
                    .unwrap_or_default()
            })
            .collect(),
    ));
    let mut models: Vec<ModelId> = reports
        .iter()
        .flat_map(|r| r.rows.iter().filter(|x| x.strategy == strategy).filter_map(|x| x.model))
        .collect();
    models.sort();
    models.dedup();
    let mut scored: Vec<(ModelId, Score, Vec<String>)> = models
        .into_iter()
        .map(|m| {
            let mut outcomes = Vec::new();
            let cells = reports
                .iter()
                .map(|r| match r.row(m, strategy) {
                    Some(row) => {
                        let p = criterion.p(row);
                        let better = criterion.better(row);
                        outcomes.push(Outcome::classify(p, better));
                        format_cell(criterion.value(row), p, better)
                    }
                    None => String::new(),
                })
                .collect();
            (m, consistency_score(&outcomes), cells)
        })
        .collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.as_str().cmp(b.0.as_str())));
    rows.extend(scored.into_iter().map(|(m, s, c)| (m.to_string(), Some(s), c)));
    TableRows { header, rows }
}

/// Render the table of one criterion for one strategy across datasets.
pub fn render_table(reports: &[MetricReport], criterion: Criterion, strategy: StrategyId, format: Format) -> String {
    let t = table_rows(reports, criterion, strategy);
    let mut out = String::new();
    match format {
        Format::Markdown => {
            out.push_str(&format!("### {strategy}: {criterion}\n\n| Model | Score |"));
            for h in &t.header {
                out.push_str(&format!(" {h} |"));
            }
            out.push_str("\n|---|---|");
            out.push_str(&"---|".repeat(t.header.len()));
            out.push('\n');
            for (label, score, cells) in &t.rows {
                let s = score.map(|s| s.to_string()).unwrap_or_default();
                out.push_str(&format!("| {label} | {s} |"));
                for c in cells {
                    out.push_str(&format!(" {c} |"));
                }
                out.push('\n');
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut head = vec!["strategy".to_string(), "model".into(), "score".into()];
            head.extend(t.header.iter().cloned());
            w.write_record(&head).expect("in-memory write");
            for (label, score, cells) in &t.rows {
                let mut rec = vec![strategy.to_string(), label.clone(), score.map(|s| s.to_string()).unwrap_or_default()];
                rec.extend(cells.iter().cloned());
                w.write_record(&rec).expect("in-memory write");
            }
            out = String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = t
                .rows
                .iter()
                .map(|(label, score, cells)| {
                    serde_json::json!({
                        "model": label,
                        "score": score.map(|s| s.value()),
                        "cells": t.header.iter().cloned().zip(cells.iter().cloned()).collect::<BTreeMap<_, _>>(),
                    })
                })
                .collect();
            out = serde_json::to_string_pretty(&serde_json::json!({
                "strategy": strategy.as_str(),
                "criterion": criterion.as_str(),
                "rows": rows,
            }))
            .expect("serialisable");
            out.push('\n');
        }
    }
    out
}

/// `100 (metric − naive) / |naive|`; `None` when the benchmark is zero.
pub fn pct_diff(metric: f64, naive: f64) -> Option<f64> {
    if naive == 0.0 || !naive.is_finite() || !metric.is_finite() {
        None
    } else {
        Some(100.0 * (metric - naive) / naive.abs())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "undefined".into())
}

fn mean_opt(v: &[Option<f64>]) -> Option<f64> {
    let xs: Vec<f64> = v.iter().flatten().copied().collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Percentage differences of Sharpe ratio and volatility against the
/// benchmark, followed by averages across datasets, across strategies and
/// overall.
pub fn emit_pct_diff(reports: &[MetricReport]) -> String {
    let metrics = [("sharpe", Criterion::Sharpe), ("vol", Criterion::Vol)];
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "model", "strategy", "metric", "value", "naive", "pct_diff"])
        .expect("in-memory write");
    // (model, strategy, metric) -> per-dataset values
    let mut by_pair: BTreeMap<(String, String, &str), Vec<Option<f64>>> = BTreeMap::new();
    for r in reports {
        let Some(b) = r.benchmark() else { continue };
        for row in r.rows.iter().filter(|x| x.model.is_some()) {
            let model = row.model.expect("filtered").to_string();
            for (name, c) in metrics {
                let d = pct_diff(c.value(row), c.value(b));
                w.write_record([
                    r.dataset.clone(),
                    model.clone(),
                    row.strategy.to_string(),
                    name.to_string(),
                    format!("{}", c.value(row)),
                    format!("{}", c.value(b)),
                    fmt_opt(d),
                ])
                .expect("in-memory write");
                by_pair.entry((model.clone(), row.strategy.to_string(), name)).or_default().push(d);
            }
        }
    }
    let mut by_model: BTreeMap<(String, &str), Vec<Option<f64>>> = BTreeMap::new();
    let mut overall: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for ((model, strategy, name), ds) in &by_pair {
        let avg = mean_opt(ds);
        w.write_record(["ALL", model, strategy, name, "", "", &fmt_opt(avg)])
            .expect("in-memory write");
        by_model.entry((model.clone(), name)).or_default().extend(ds.iter().copied());
        overall.entry(name).or_default().extend(ds.iter().copied());
    }
    for ((model, name), v) in &by_model {
        w.write_record(["ALL", model, "ALL", name, "", "", &fmt_opt(mean_opt(v))])
            .expect("in-memory write");
    }
    for (name, v) in &overall {
        w.write_record(["ALL", "ALL", "ALL", name, "", "", &fmt_opt(mean_opt(v))])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn metrics_csv(report: &MetricReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model",
        "strategy",
        "sharpe",
        "sharpe_net",
        "volatility",
        "p_sharpe",
        "p_sharpe_net",
        "p_vol_bf",
        "p_vol_dm",
    ])
    .expect("in-memory write");
    let f = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
    for r in &report.rows {
        w.write_record([
            r.model.map(|m| m.to_string()).unwrap_or_else(|| "NAIVE".into()),
            r.strategy.to_string(),
            format!("{:.3}", r.sharpe),
            format!("{:.3}", r.sharpe_net),
            format!("{:.3}", r.volatility),
            f(r.p_sharpe),
            f(r.p_sharpe_net),
            f(r.p_vol_bf),
            f(r.p_vol_dm),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn write_report(dir: &Path, name: &str, text: &str, hashes: &mut BTreeMap<String, String>) -> Result<(), RunError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| RunError::Internal(format!("{}: {e}", parent.display())))?;
    }
    fs::write(&path, text).map_err(|e| RunError::Internal(format!("{}: {e}", path.display())))?;
    hashes.insert(
        name.to_string(),
        sha256_file(&path).map_err(|e| RunError::Internal(e.to_string()))?,
    );
    Ok(())
}

fn extension(f: Format) -> &'static str {
    match f {
        Format::Csv => "csv",
        Format::Markdown => "md",
        Format::Json => "json",
    }
}

/// Write every table of every criterion in the chosen formats.
fn write_tables(
    dir: &Path,
    reports: &[MetricReport],
    strategies: &[StrategyId],
    formats: &[Format],
    hashes: &mut BTreeMap<String, String>,
) -> Result<(), RunError> {
    for c in Criterion::ALL {
        for &f in formats {
            let text = match f {
                Format::Json => {
                    let v: Vec<serde_json::Value> = strategies
                        .iter()
                        .map(|s| serde_json::from_str(&render_table(reports, c, *s, f)).expect("valid json"))
                        .collect();
                    serde_json::to_string_pretty(&v).expect("serialisable") + "\n"
                }
                Format::Csv => {
                    let mut all = String::new();
                    for (i, s) in strategies.iter().enumerate() {
                        let t = render_table(reports, c, *s, f);
                        // keep one header
                        let body = if i == 0 { t.as_str() } else { t.split_once('\n').map_or("", |x| x.1) };
                        all.push_str(body);
                    }
                    all
                }
                Format::Markdown => strategies
                    .iter()
                    .map(|s| render_table(reports, c, *s, f))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            write_report(dir, &format!("tables/{}.{}", c.as_str(), extension(f)), &text, hashes)?;
        }
    }
    Ok(())
}

/// Execute a configuration file end to end.
pub fn run(config_path: &Path, overrides: &RunOverrides) -> Result<Manifest, RunError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| RunError::Config(format!("{}: {e}", config_path.display())))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(s) = overrides.seed {
        cfg.backtest.master_seed = s;
    }
    if let Some(f) = &overrides.formats {
        cfg.formats = f.clone();
    }
    if let Some(o) = &overrides.output_dir {
        cfg.output_dir = o.clone();
    }
    let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out = if cfg.output_dir.is_absolute() {
        cfg.output_dir.clone()
    } else {
        base.join(&cfg.output_dir)
    };
    fs::create_dir_all(&out).map_err(|e| RunError::Internal(format!("{}: {e}", out.display())))?;

    let mut reports = Vec::new();
    let mut datasets = Vec::new();
    let mut hashes = BTreeMap::new();
    for (name, ds) in &cfg.dataset {
        let (panel, daily, dropped) = prepare_dataset(ds, &base)?;
        log::info!("{name}: {} periods, {} assets", panel.n_periods(), panel.n_assets());
        let result = run_backtest(&panel, daily.as_ref(), &cfg.backtest, &cfg.model, overrides.jobs)?;
        let dir = out.join(name);
        let files = write_result_csvs(&result, &dir)?;
        let report = compute_metrics(name, &result, &cfg.stats);
        let metrics_rel = PathBuf::from(name).join("metrics.json");
        write_report(
            &out,
            &metrics_rel.to_string_lossy(),
            &(serde_json::to_string_pretty(&report).expect("serialisable") + "\n"),
            &mut hashes,
        )?;
        write_report(&out, &format!("{name}/metrics.csv"), &metrics_csv(&report), &mut hashes)?;
        datasets.push(DatasetManifest {
            name: name.clone(),
            source: ds.path.clone(),
            dropped_rows: dropped,
            periods: panel.n_periods(),
            assets: panel.assets().to_vec(),
            frequency: panel.frequency(),
            weighting: ds.weighting.clone(),
            metrics: metrics_rel,
            files: files.into_iter().collect(),
            fallback_log: result.fallback_log.clone(),
        });
        reports.push(report);
    }
    let strategies = cfg.backtest.active_strategies();
    write_tables(&out, &reports, &strategies, &cfg.formats, &mut hashes)?;
    write_report(&out, "pct_diff.csv", &emit_pct_diff(&reports), &mut hashes)?;
    check_reports(&reports)?;
    let manifest = Manifest {
        config: cfg,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        datasets,
        reports: hashes,
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("serialisable") + "\n",
    )
    .map_err(|e| RunError::Internal(e.to_string()))?;
    Ok(manifest)
}

/// Invariants every report must satisfy.
fn check_reports(reports: &[MetricReport]) -> Result<(), RunError> {
    for r in reports {
        for row in &r.rows {
            for p in [row.p_sharpe, row.p_sharpe_net, row.p_vol_bf, row.p_vol_dm].into_iter().flatten() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(RunError::Internal(format!("{}: p-value {p} outside [0, 1]", r.dataset)));
                }
            }
            if row.volatility < 0.0 {
                return Err(RunError::Internal(format!("{}: negative volatility", r.dataset)));
            }
        }
    }
    Ok(())
}

/// Load the metric reports listed in a manifest.
pub fn load_reports(manifest_path: &Path) -> Result<(Manifest, Vec<MetricReport>), RunError> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| RunError::Data(format!("{}: {e}", manifest_path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| RunError::Config(e.to_string()))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let reports = manifest
        .datasets
        .iter()
        .map(|d| {
            let p = dir.join(&d.metrics);
            let t = fs::read_to_string(&p).map_err(|e| RunError::Data(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&t).map_err(|e| RunError::Data(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<MetricReport>, RunError>>()?;
    Ok((manifest, reports))
}
