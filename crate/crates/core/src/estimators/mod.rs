//! One-step-ahead mean and covariance forecasts from a return window.
//!
//! [`estimate`] and [`estimate_models`] dispatch to the model-specific fits
//! and always finish with an eigenvalue repair so every covariance handed to
//! the strategies is symmetric positive definite. The mean forecast is the
//! window sample mean except for the VAR, VEC and RSVAR models, which use
//! their own conditional forecast.

pub mod bekk;
pub mod cache;
pub mod combine;
pub mod copula;
pub mod dcc;
pub mod garch;
pub mod msv;
pub mod psd;
pub mod rcov;
pub mod rsvar;
pub mod sample;
pub mod var;
pub mod vecm;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::WindowSlice;
use crate::linalg;
use crate::optim::OptimOptions;

pub use bekk::{bekk_cov, bekk_fit, BekkFit, BekkOptions, BekkParams};
pub use combine::{combine_parameters, Combined};
pub use copula::{copula_from_margins, CopulaFit};
pub use dcc::{ccc_cov, dcc_cov, dcc_from_margins, fit_margins, DccFit, DccParams, DccSpec, Margins};
pub use garch::{garch11_fit, GarchFit, GarchOptions};
pub use msv::{msv_fit, McmcConfig, MsvFit};
pub use psd::{ensure_psd, scaled_floor};
pub use rcov::{rcov_from_blocks, realized_cov};
pub use rsvar::{rsvar_fit, RsvarFit, RsvarOptions};
pub use sample::{ewma_cov, sample_cov};
pub use var::{var_fit, VarFit};
pub use vecm::{johansen, johansen_rank, vecm_fit, VecmFit};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EstimateError {
    #[error("insufficient history for {what}: need {needed} observations, got {got}")]
    InsufficientHistory {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{model} did not converge: {detail}")]
    NonConvergence { model: &'static str, detail: String },
    #[error("non-finite values in input or estimate")]
    NonFinite,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("{model} supports at most {max} assets, got {got}")]
    TooManyAssets {
        model: &'static str,
        max: usize,
        got: usize,
    },
    #[error("daily returns required but not supplied")]
    MissingDaily,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelId {
    Cov,
    Ewma,
    Var,
    Vec,
    Bekk,
    Abekk,
    Ccc,
    Dcc,
    Adcc,
    Copula,
    Rsvar,
    Msv,
    Rcov,
    Cp,
}

impl ModelId {
    pub const ALL: [ModelId; 14] = [
        ModelId::Cov,
        ModelId::Ewma,
        ModelId::Var,
        ModelId::Vec,
        ModelId::Bekk,
        ModelId::Abekk,
        ModelId::Ccc,
        ModelId::Dcc,
        ModelId::Adcc,
        ModelId::Copula,
        ModelId::Rsvar,
        ModelId::Msv,
        ModelId::Rcov,
        ModelId::Cp,
    ];

    /// The thirteen models averaged by CP.
    pub const COMPONENTS: [ModelId; 13] = [
        ModelId::Cov,
        ModelId::Ewma,
        ModelId::Var,
        ModelId::Vec,
        ModelId::Bekk,
        ModelId::Abekk,
        ModelId::Ccc,
        ModelId::Dcc,
        ModelId::Adcc,
        ModelId::Copula,
        ModelId::Rsvar,
        ModelId::Msv,
        ModelId::Rcov,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Cov => "COV",
            ModelId::Ewma => "EWMA",
            ModelId::Var => "VAR",
            ModelId::Vec => "VEC",
            ModelId::Bekk => "BEKK",
            ModelId::Abekk => "ABEKK",
            ModelId::Ccc => "CCC",
            ModelId::Dcc => "DCC",
            ModelId::Adcc => "ADCC",
            ModelId::Copula => "COPULA",
            ModelId::Rsvar => "RSVAR",
            ModelId::Msv => "MSV",
            ModelId::Rcov => "RCOV",
            ModelId::Cp => "CP",
        }
    }

    /// Stable small integer used to derive per-model random streams.
    pub fn code(self) -> u64 {
        ModelId::ALL.iter().position(|m| *m == self).unwrap_or(0) as u64
    }

    pub fn needs_seed(self) -> bool {
        matches!(self, ModelId::Rsvar | ModelId::Msv | ModelId::Cp)
    }

    fn uses_margins(self) -> bool {
        matches!(self, ModelId::Ccc | ModelId::Dcc | ModelId::Adcc | ModelId::Copula)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelId::ALL
            .iter()
            .copied()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown model '{s}'"))
    }
}

/// Fit metadata: numeric values and boolean flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub values: BTreeMap<String, f64>,
    pub flags: BTreeSet<String>,
}

impl Diagnostics {
    pub fn set(&mut self, key: &str, v: f64) {
        self.values.insert(key.to_string(), v);
    }

    pub fn flag(&mut self, key: impl Into<String>) {
        self.flags.insert(key.into());
    }

    pub fn has(&self, key: &str) -> bool {
        self.flags.contains(key)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub model: ModelId,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    pub burn_in: usize,
    pub draws: usize,
    pub thin: usize,
    pub seed: Option<u64>,
}

impl Default for McmcSettings {
    fn default() -> Self {
        let c = McmcConfig::default();
        Self {
            burn_in: c.burn_in,
            draws: c.draws,
            thin: c.thin,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub max_iter: usize,
    pub gradient_tol: f64,
    pub restarts: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        let o = OptimOptions::default();
        Self {
            max_iter: o.max_iter,
            gradient_tol: o.gradient_tol,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub lambda_ewma: f64,
    pub var_lags: usize,
    pub regimes: usize,
    pub rsvar_starts: usize,
    pub mcmc: McmcSettings,
    /// Eigenvalue floor relative to the mean diagonal.
    pub psd_floor: f64,
    pub optimizer: OptimizerSettings,
    pub garch_min_obs: usize,
    pub regime_min_obs: usize,
    pub sv_min_obs: usize,
    /// Average the trailing four realized matrices.
    pub rcov_smoothing: bool,
    pub copula_draws: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lambda_ewma: 0.94,
            var_lags: 2,
            regimes: 2,
            rsvar_starts: 20,
            mcmc: McmcSettings::default(),
            psd_floor: 1e-8,
            optimizer: OptimizerSettings::default(),
            garch_min_obs: 100,
            regime_min_obs: 200,
            sv_min_obs: 200,
            rcov_smoothing: false,
            copula_draws: 20_000,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), EstimateError> {
        if !(self.lambda_ewma > 0.0 && self.lambda_ewma < 1.0) {
            return Err(EstimateError::InvalidConfig("lambda_ewma must lie in (0, 1)".into()));
        }
        if self.var_lags == 0 {
            return Err(EstimateError::InvalidConfig("var_lags must be positive".into()));
        }
        if self.regimes < 2 {
            return Err(EstimateError::InvalidConfig("regimes must be at least 2".into()));
        }
        if !(self.psd_floor > 0.0) {
            return Err(EstimateError::InvalidConfig("psd_floor must be positive".into()));
        }
        if self.mcmc.draws == 0 || self.mcmc.thin == 0 {
            return Err(EstimateError::InvalidConfig("mcmc draws and thin must be positive".into()));
        }
        Ok(())
    }

    pub fn optim(&self) -> OptimOptions {
        OptimOptions {
            max_iter: self.optimizer.max_iter,
            gradient_tol: self.optimizer.gradient_tol,
            ..OptimOptions::default()
        }
    }

    pub fn garch(&self) -> GarchOptions {
        GarchOptions {
            min_obs: self.garch_min_obs,
            optim: self.optim(),
            restarts: self.optimizer.restarts,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.mcmc.seed = Some(seed);
        self
    }
}

/// SplitMix64 mix of two values; used to derive independent random streams.
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Raw {
    mu: Option<DVector<f64>>,
    sigma: DMatrix<f64>,
    diag: Diagnostics,
}

impl Raw {
    fn sigma(sigma: DMatrix<f64>) -> Self {
        Self {
            mu: None,
            sigma,
            diag: Diagnostics::default(),
        }
    }
}

struct Context<'a> {
    slice: &'a WindowSlice,
    config: &'a ModelConfig,
    margins: Option<Result<Margins, EstimateError>>,
}

impl Context<'_> {
    fn margins(&mut self) -> Result<&Margins, EstimateError> {
        if self.margins.is_none() {
            self.margins = Some(fit_margins(&self.slice.window, &self.config.garch()));
        }
        match self.margins.as_ref().expect("just set") {
            Ok(m) => Ok(m),
            Err(e) => Err(e.clone()),
        }
    }

    fn seed(&self, model: ModelId) -> Result<u64, EstimateError> {
        self.config
            .mcmc
            .seed
            .map(|s| derive_seed(s, model.code()))
            .ok_or_else(|| EstimateError::InvalidConfig(format!("{model} requires a seed")))
    }

    fn raw(&mut self, model: ModelId) -> Result<Raw, EstimateError> {
        let w = &self.slice.window;
        let cfg = *self.config;
        Ok(match model {
            ModelId::Cov => Raw::sigma(sample_cov(w)?),
            ModelId::Ewma => Raw::sigma(ewma_cov(w, cfg.lambda_ewma)?),
            ModelId::Var => {
                let fit = var_fit(w, cfg.var_lags)?;
                let mut diag = Diagnostics::default();
                if fit.ridge {
                    diag.flag("ridge");
                }
                Raw {
                    mu: Some(fit.one_step_mean),
                    sigma: fit.residual_cov,
                    diag,
                }
            }
            ModelId::Vec => {
                let fit = vecm_fit(w, cfg.var_lags)?;
                let mut diag = Diagnostics::default();
                diag.set("rank", fit.rank as f64);
                if fit.ridge {
                    diag.flag("ridge");
                }
                Raw {
                    mu: Some(fit.one_step_mean),
                    sigma: fit.residual_cov,
                    diag,
                }
            }
            ModelId::Bekk | ModelId::Abekk => {
                let opts = BekkOptions {
                    optim: cfg.optim(),
                    ..BekkOptions::default()
                };
                let fit = bekk_fit(w, model == ModelId::Abekk, &opts)?;
                let mut diag = Diagnostics::default();
                diag.set("log_likelihood", fit.log_likelihood);
                diag.set("iterations", fit.iterations as f64);
                diag.set("persistence", fit.params.persistence());
                Raw {
                    mu: None,
                    sigma: fit.h_next,
                    diag,
                }
            }
            ModelId::Ccc => {
                let m = self.margins()?;
                Raw::sigma(dcc::ccc_from_margins(m))
            }
            ModelId::Dcc | ModelId::Adcc => {
                let optim = cfg.optim();
                let m = self.margins()?;
                let spec = DccSpec {
                    asymmetric: model == ModelId::Adcc,
                    fixed_g: None,
                };
                let fit = dcc_from_margins(m, spec, &optim)?;
                let mut diag = Diagnostics::default();
                diag.set("a", fit.params.a);
                diag.set("b", fit.params.b);
                diag.set("g", fit.params.g);
                diag.set("log_likelihood", fit.log_likelihood);
                diag.set("iterations", fit.iterations as f64);
                if fit.g_shrunk {
                    diag.flag("g_shrunk");
                }
                Raw {
                    mu: None,
                    sigma: fit.sigma,
                    diag,
                }
            }
            ModelId::Copula => {
                let draws = cfg.copula_draws;
                let seed = self.config.mcmc.seed.map_or(0, |s| derive_seed(s, model.code()));
                let m = self.margins()?;
                let fit = copula_from_margins(m, draws, seed)?;
                let mut diag = Diagnostics::default();
                diag.set("nu", fit.nu);
                diag.set("log_likelihood", fit.log_likelihood);
                if fit.nu_at_upper_bound {
                    diag.flag("nu_at_upper_bound");
                }
                Raw {
                    mu: None,
                    sigma: fit.sigma,
                    diag,
                }
            }
            ModelId::Rsvar => {
                let opts = RsvarOptions {
                    regimes: cfg.regimes,
                    lags: cfg.var_lags,
                    starts: cfg.rsvar_starts,
                    min_obs: cfg.regime_min_obs,
                    ..RsvarOptions::default()
                };
                let fit = rsvar_fit(w, &opts, self.seed(model)?)?;
                let mut diag = Diagnostics::default();
                diag.set("log_likelihood", fit.log_likelihood);
                diag.set("iterations", fit.trace.len() as f64);
                diag.set("successful_starts", fit.successful_starts as f64);
                for (r, p) in fit.next_probs.iter().enumerate() {
                    diag.set(&format!("regime_prob_{r}"), *p);
                }
                Raw {
                    mu: Some(fit.mu),
                    sigma: fit.sigma,
                    diag,
                }
            }
            ModelId::Msv => {
                let mcmc = McmcConfig {
                    burn_in: cfg.mcmc.burn_in,
                    draws: cfg.mcmc.draws,
                    thin: cfg.mcmc.thin,
                };
                let fit = msv_fit(w, &mcmc, self.seed(model)?, cfg.sv_min_obs)?;
                let mut diag = Diagnostics::default();
                for (j, a) in fit.assets.iter().enumerate() {
                    diag.set(&format!("phi_{j}"), a.phi);
                }
                if fit.phi_at_edge {
                    diag.flag("phi_at_boundary");
                }
                Raw {
                    mu: None,
                    sigma: fit.sigma,
                    diag,
                }
            }
            ModelId::Rcov => {
                let blocks = self.slice.daily_companion.as_ref().ok_or(EstimateError::MissingDaily)?;
                let est = rcov_from_blocks(blocks, cfg.rcov_smoothing)?;
                let mut diag = Diagnostics::default();
                if est.fell_back {
                    diag.flag("short_period_fallback");
                }
                Raw {
                    mu: None,
                    sigma: est.sigma,
                    diag,
                }
            }
            ModelId::Cp => unreachable!("CP is assembled from its components"),
        })
    }
}

fn finish(model: ModelId, raw: Raw, window: &DMatrix<f64>, config: &ModelConfig) -> Result<MomentEstimate, EstimateError> {
    let mut diag = raw.diag;
    let floor = scaled_floor(&raw.sigma, config.psd_floor);
    let min_before = linalg::min_eigenvalue(&linalg::symmetrize(&raw.sigma));
    let (sigma, repaired) = ensure_psd(&raw.sigma, floor)?;
    diag.set("min_eigenvalue_raw", min_before);
    diag.set("psd_floor", floor);
    if repaired {
        diag.flag("psd_repaired");
    }
    let mu = raw.mu.unwrap_or_else(|| linalg::column_means(window));
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(EstimateError::NonFinite);
    }
    Ok(MomentEstimate {
        mu,
        sigma,
        model,
        diagnostics: diag,
    })
}

/// Estimate several models on one window, sharing the GARCH margins and the
/// CP components. Results come back in the order requested.
pub fn estimate_models(
    models: &[ModelId],
    slice: &WindowSlice,
    config: &ModelConfig,
) -> Vec<Result<MomentEstimate, EstimateError>> {
    if let Err(e) = config.validate() {
        return models.iter().map(|_| Err(e.clone())).collect();
    }
    let want_cp = models.contains(&ModelId::Cp);
    let mut todo: Vec<ModelId> = if want_cp {
        ModelId::COMPONENTS.to_vec()
    } else {
        models.to_vec()
    };
    // margin-based fits run together
    todo.sort_by_key(|m| (m.uses_margins(), m.code()));
    todo.dedup();
    let mut ctx = Context {
        slice,
        config,
        margins: None,
    };
    let mut done: BTreeMap<ModelId, Result<MomentEstimate, EstimateError>> = BTreeMap::new();
    for m in todo {
        let r = ctx.raw(m).and_then(|raw| finish(m, raw, &slice.window, config));
        if let Err(e) = &r {
            log::debug!("{m} failed on window ending before {}: {e}", slice.target_index);
        }
        done.insert(m, r);
    }
    if want_cp {
        let r = combine_from(&done).and_then(|c| {
            let mut diag = Diagnostics::default();
            diag.set("components", c.used.len() as f64);
            for m in &c.missing {
                diag.flag(format!("missing:{m}"));
            }
            finish(
                ModelId::Cp,
                Raw {
                    mu: None,
                    sigma: c.sigma,
                    diag,
                },
                &slice.window,
                config,
            )
        });
        done.insert(ModelId::Cp, r);
    }
    models
        .iter()
        .map(|m| done.get(m).cloned().expect("every requested model is computed"))
        .collect()
}

fn combine_from(done: &BTreeMap<ModelId, Result<MomentEstimate, EstimateError>>) -> Result<Combined, EstimateError> {
    let inputs: Vec<(ModelId, Option<&DMatrix<f64>>)> = ModelId::COMPONENTS
        .iter()
        .map(|m| (*m, done.get(m).and_then(|r| r.as_ref().ok()).map(|e| &e.sigma)))
        .collect();
    combine_parameters(&inputs)
}

/// Estimate one model on one window.
pub fn estimate(model: ModelId, slice: &WindowSlice, config: &ModelConfig) -> Result<MomentEstimate, EstimateError> {
    estimate_models(&[model], slice, config)
        .pop()
        .expect("one result per model")
}
