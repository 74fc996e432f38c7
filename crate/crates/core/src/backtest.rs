//! Rolling-window out-of-sample experiment.
//!
//! For each window every requested model produces a forecast, every strategy
//! turns it into weights, and the weights earn the next period's returns.
//! Weights drift with realised returns between rebalances; the distance
//! between new and drifted weights is the turnover, charged at `κ` per unit.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{rolling_windows, IngestError, ReturnPanel};
use crate::estimators::{derive_seed, estimate, estimate_models, ModelConfig, ModelId};
use crate::strategies::{naive_weights, weights_for, StrategyId};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("invalid backtest configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("portfolio wiped out: 1 + w'r = {0}")]
    WipedOut(f64),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    /// Estimation window length M.
    pub window: usize,
    /// Investment horizon; only 1 is supported.
    pub horizon: usize,
    pub kappa: f64,
    pub master_seed: u64,
    pub models: Vec<ModelId>,
    pub strategies: Vec<StrategyId>,
    /// Start fully invested instead of from cash, so the first period
    /// carries no entry turnover.
    pub free_initial_allocation: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: 520,
            horizon: 1,
            kappa: 0.005,
            master_seed: 0,
            models: vec![ModelId::Cov],
            strategies: vec![StrategyId::Mvp],
            free_initial_allocation: false,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        if self.horizon != 1 {
            return Err(BacktestError::Config(format!("horizon must be 1, got {}", self.horizon)));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(BacktestError::Config(format!("kappa must be nonnegative, got {}", self.kappa)));
        }
        if self.window < 60 {
            return Err(BacktestError::Config(format!("window must be at least 60, got {}", self.window)));
        }
        if self.models.is_empty() && self.strategies.iter().any(|s| *s != StrategyId::Naive) {
            return Err(BacktestError::Config("no models selected".into()));
        }
        Ok(())
    }

    /// Strategies other than the benchmark, deduplicated, in canonical order.
    pub fn active_strategies(&self) -> Vec<StrategyId> {
        StrategyId::ALL
            .iter()
            .copied()
            .filter(|s| *s != StrategyId::Naive && self.strategies.contains(s))
            .collect()
    }

    pub fn active_models(&self) -> Vec<ModelId> {
        ModelId::ALL.iter().copied().filter(|m| self.models.contains(m)).collect()
    }
}

/// Buy-and-hold drift: `wᵢ(1+rᵢ) / (1 + w'r)`.
pub fn drifted_weights(w_prev: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>, BacktestError> {
    let growth = 1.0 + w_prev.dot(r);
    if !(growth > 0.0) {
        return Err(BacktestError::WipedOut(growth));
    }
    Ok(w_prev.zip_map(r, |w, ri| w * (1.0 + ri) / growth))
}

/// L1 distance between target and drifted weights.
pub fn turnover(w_new: &DVector<f64>, w_drifted: &DVector<f64>) -> f64 {
    w_new.iter().zip(w_drifted.iter()).map(|(a, b)| (a - b).abs()).sum()
}

/// `(1 − κ·turnover) · w'r`.
pub fn net_return(w: &DVector<f64>, w_drifted: &DVector<f64>, r_next: &DVector<f64>, kappa: f64) -> f64 {
    (1.0 - kappa * turnover(w, w_drifted)) * w.dot(r_next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackEntry {
    pub target_index: usize,
    pub date: NaiveDate,
    pub model: Option<ModelId>,
    pub strategy: Option<StrategyId>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySeries {
    pub gross: Vec<f64>,
    pub net: Vec<f64>,
    pub turnover: Vec<f64>,
    /// (P−M)×N weight history.
    pub weights: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub dates: Vec<NaiveDate>,
    pub assets: Vec<String>,
    /// Realised returns of the target periods, aligned with `dates`.
    pub realized: DMatrix<f64>,
    pub benchmark: StrategySeries,
    pub series: BTreeMap<(ModelId, StrategyId), StrategySeries>,
    pub fallback_log: Vec<FallbackEntry>,
}

impl BacktestResult {
    pub fn get(&self, model: ModelId, strategy: StrategyId) -> Option<&StrategySeries> {
        if strategy == StrategyId::Naive {
            return Some(&self.benchmark);
        }
        self.series.get(&(model, strategy))
    }
}

struct WindowOutput {
    weights: BTreeMap<(ModelId, StrategyId), DVector<f64>>,
    fallbacks: Vec<FallbackEntry>,
}

fn window_weights(
    slice: &crate::data::WindowSlice,
    models: &[ModelId],
    strategies: &[StrategyId],
    model_cfg: &ModelConfig,
    master_seed: u64,
) -> WindowOutput {
    let cfg = model_cfg.with_seed(derive_seed(master_seed, slice.target_index as u64));
    let n = slice.n_assets();
    let mut fallbacks = Vec::new();
    let mut weights = BTreeMap::new();
    let results = estimate_models(models, slice, &cfg);
    for (&model, result) in models.iter().zip(results) {
        let est = match result {
            Ok(e) => e,
            Err(err) => {
                fallbacks.push(FallbackEntry {
                    target_index: slice.target_index,
                    date: slice.target_date,
                    model: Some(model),
                    strategy: None,
                    reason: err.to_string(),
                });
                match estimate(ModelId::Cov, slice, &cfg) {
                    Ok(mut e) => {
                        e.model = model;
                        e
                    }
                    Err(err) => {
                        fallbacks.push(FallbackEntry {
                            target_index: slice.target_index,
                            date: slice.target_date,
                            model: Some(model),
                            strategy: None,
                            reason: format!("sample covariance fallback failed: {err}"),
                        });
                        for &s in strategies {
                            weights.insert((model, s), naive_weights(n).weights);
                        }
                        continue;
                    }
                }
            }
        };
        for &s in strategies {
            let w = match weights_for(s, &est.mu, &est.sigma) {
                Ok(w) => {
                    if w.negative_denominator {
                        fallbacks.push(FallbackEntry {
                            target_index: slice.target_index,
                            date: slice.target_date,
                            model: Some(model),
                            strategy: Some(s),
                            reason: "negative tangency denominator (kept)".into(),
                        });
                    }
                    w.weights
                }
                Err(err) => {
                    fallbacks.push(FallbackEntry {
                        target_index: slice.target_index,
                        date: slice.target_date,
                        model: Some(model),
                        strategy: Some(s),
                        reason: format!("{err}; 1/N weights used"),
                    });
                    naive_weights(n).weights
                }
            };
            weights.insert((model, s), w);
        }
    }
    WindowOutput { weights, fallbacks }
}

/// Carry a weight path through drift, turnover and costs.
fn realise(
    weights: &[DVector<f64>],
    realized: &DMatrix<f64>,
    kappa: f64,
    free_start: bool,
    dates: &[NaiveDate],
    target0: usize,
    tag: (Option<ModelId>, Option<StrategyId>),
    log: &mut Vec<FallbackEntry>,
) -> StrategySeries {
    let t_len = weights.len();
    let n = realized.ncols();
    let mut out = StrategySeries {
        gross: Vec::with_capacity(t_len),
        net: Vec::with_capacity(t_len),
        turnover: Vec::with_capacity(t_len),
        weights: DMatrix::zeros(t_len, n),
    };
    let mut drifted = if free_start {
        weights.first().cloned().unwrap_or_else(|| DVector::zeros(n))
    } else {
        DVector::zeros(n)
    };
    for (t, w) in weights.iter().enumerate() {
        let r = realized.row(t).transpose();
        let to = turnover(w, &drifted);
        let gross = w.dot(&r);
        out.gross.push(gross);
        out.net.push((1.0 - kappa * to) * gross);
        out.turnover.push(to);
        out.weights.set_row(t, &w.transpose());
        drifted = match drifted_weights(w, &r) {
            Ok(d) => d,
            Err(e) => {
                log.push(FallbackEntry {
                    target_index: target0 + t,
                    date: dates[t],
                    model: tag.0,
                    strategy: tag.1,
                    reason: format!("{e}; restarting from cash"),
                });
                DVector::zeros(n)
            }
        };
    }
    out
}

/// Run the experiment. `jobs` bounds the worker threads (default: all).
pub fn run_backtest(
    panel: &ReturnPanel,
    daily: Option<&ReturnPanel>,
    config: &BacktestConfig,
    model_cfg: &ModelConfig,
    jobs: Option<usize>,
) -> Result<BacktestResult, BacktestError> {
    config.validate()?;
    model_cfg
        .validate()
        .map_err(|e| BacktestError::Config(e.to_string()))?;
    let models = config.active_models();
    let strategies = config.active_strategies();
    let needs_daily = models.iter().any(|m| matches!(m, ModelId::Rcov | ModelId::Cp));
    let daily = if needs_daily { daily } else { None };
    let windows = rolling_windows(panel, config.window, daily)?;
    let m = config.window;
    let p = panel.n_periods();
    let dates: Vec<NaiveDate> = panel.dates()[m..].to_vec();
    let realized = panel.returns().rows(m, p - m).into_owned();

    let work = |k: usize| window_weights(&windows.slice(k), &models, &strategies, model_cfg, config.master_seed);
    let outputs: Vec<WindowOutput> = match jobs {
        Some(j) if j > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| BacktestError::Config(e.to_string()))?
            .install(|| (0..windows.len()).into_par_iter().map(work).collect()),
        _ => (0..windows.len()).into_par_iter().map(work).collect(),
    };

    let mut fallback_log: Vec<FallbackEntry> = outputs.iter().flat_map(|o| o.fallbacks.clone()).collect();
    let naive: Vec<DVector<f64>> = (0..windows.len()).map(|_| naive_weights(panel.n_assets()).weights).collect();
    let benchmark = realise(
        &naive,
        &realized,
        config.kappa,
        config.free_initial_allocation,
        &dates,
        m,
        (None, Some(StrategyId::Naive)),
        &mut fallback_log,
    );
    let mut series = BTreeMap::new();
    for &model in &models {
        for &s in &strategies {
            let path: Vec<DVector<f64>> = outputs
                .iter()
                .map(|o| o.weights.get(&(model, s)).cloned().expect("weights for every pair"))
                .collect();
            let ser = realise(
                &path,
                &realized,
                config.kappa,
                config.free_initial_allocation,
                &dates,
                m,
                (Some(model), Some(s)),
                &mut fallback_log,
            );
            series.insert((model, s), ser);
        }
    }
    for f in &fallback_log {
        log::info!(
            "fallback at {} ({}{}): {}",
            f.date,
            f.model.map(|m| m.to_string()).unwrap_or_default(),
            f.strategy.map(|s| format!("/{s}")).unwrap_or_default(),
            f.reason
        );
    }
    Ok(BacktestResult {
        dates,
        assets: panel.assets().to_vec(),
        realized,
        benchmark,
        series,
        fallback_log,
    })
}

fn write_series<W: Write>(out: W, dates: &[NaiveDate], assets: &[String], s: &StrategySeries) -> Result<(), BacktestError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string(), "gross".into(), "net".into(), "turnover".into()];
    header.extend(assets.iter().map(|a| format!("w_{a}")));
    w.write_record(&header)?;
    for (t, d) in dates.iter().enumerate() {
        let mut rec = vec![
            d.format("%Y-%m-%d").to_string(),
            format!("{}", s.gross[t]),
            format!("{}", s.net[t]),
            format!("{}", s.turnover[t]),
        ];
        rec.extend(s.weights.row(t).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn series_file_name(model: Option<ModelId>, strategy: StrategyId) -> String {
    match model {
        Some(m) => format!("{m}_{strategy}.csv"),
        None => format!("{strategy}.csv"),
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Write one CSV per series into `dir`; returns `(file name, sha256)` pairs.
pub fn write_result_csvs(result: &BacktestResult, dir: &Path) -> Result<Vec<(String, String)>, BacktestError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut emit = |name: String, s: &StrategySeries| -> Result<(), BacktestError> {
        let path: PathBuf = dir.join(&name);
        let mut buf = Vec::new();
        write_series(&mut buf, &result.dates, &result.assets, s)?;
        fs::write(&path, &buf)?;
        files.push((name, hex::encode(Sha256::digest(&buf))));
        Ok(())
    };
    emit(series_file_name(None, StrategyId::Naive), &result.benchmark)?;
    for ((m, s), ser) in &result.series {
        emit(series_file_name(Some(*m), *s), ser)?;
    }
    Ok(files)
}
