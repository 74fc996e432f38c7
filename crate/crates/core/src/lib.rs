//! Covariance estimation and variance-based portfolio backtesting.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`data`] loads return files, scales daily data to weekly or monthly
//!    periods and slices rolling estimation windows.
//! 2. [`estimators`] turns each window into a one-step-ahead mean and
//!    covariance forecast under one of fourteen econometric models.
//! 3. [`strategies`] maps a forecast to portfolio weights and [`backtest`]
//!    realises gross returns, turnover and cost-adjusted returns.
//! 4. [`stats`] compares every strategy against the 1/N benchmark and
//!    [`report`] renders tables and plot data.

pub mod backtest;
pub mod data;
pub mod estimators;
pub mod linalg;
pub mod optim;
pub mod report;
pub mod stats;
pub mod strategies;
