mod common;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use volport::backtest::{drifted_weights, net_return, run_backtest, turnover, write_result_csvs, BacktestConfig};
use volport::data::{Frequency, ReturnPanel};
use volport::estimators::{ModelConfig, ModelId};
use volport::strategies::StrategyId;

fn weekly_dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 7).unwrap();
    (0..n).map(|k| start + Duration::weeks(k as i64)).collect()
}

fn panel(returns: DMatrix<f64>) -> ReturnPanel {
    let n = returns.ncols();
    let assets = (0..n).map(|j| format!("A{j}")).collect();
    ReturnPanel::new(weekly_dates(returns.nrows()), assets, returns, Frequency::Weekly).unwrap()
}

fn random_panel(seed: u64, periods: usize, n: usize) -> ReturnPanel {
    let mut rng = common::rng(seed);
    panel(DMatrix::from_fn(periods, n, |_, j| 0.001 * (j as f64 + 1.0) + 0.02 * common::normal(&mut rng)))
}

fn all_strategies() -> Vec<StrategyId> {
    vec![StrategyId::Naive, StrategyId::Mvp, StrategyId::ConMvp, StrategyId::Vt, StrategyId::Tp]
}

#[test]
fn hand_fixture_reproduces_the_cost_formula() {
    // Window of 60 flat periods, then two target periods with known returns.
    let mut r = DMatrix::from_element(62, 2, 0.0);
    r[(60, 0)] = 0.10;
    r[(60, 1)] = -0.10;
    r[(61, 0)] = 0.02;
    r[(61, 1)] = 0.04;
    let config = BacktestConfig {
        window: 60,
        kappa: 0.005,
        models: vec![],
        strategies: vec![StrategyId::Naive],
        ..BacktestConfig::default()
    };
    let res = run_backtest(&panel(r), None, &config, &ModelConfig::default(), Some(1)).unwrap();
    let b = &res.benchmark;
    assert_eq!(b.gross.len(), 2);
    for t in 0..2 {
        assert_eq!(b.weights.row(t).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.5]);
    }
    // Period 1: from cash, turnover 1, gross 0.
    assert_eq!(b.turnover[0], 1.0);
    assert_eq!(b.gross[0], 0.0);
    assert_eq!(b.net[0], 0.0);
    // Drifted weights (0.55, 0.45) after a zero portfolio return, turnover 0.1.
    assert!((b.turnover[1] - 0.1).abs() < 1e-15);
    assert!((b.gross[1] - 0.03).abs() < 1e-15);
    let expected = (1.0 - 0.005 * 0.1) * 0.03;
    assert!((b.net[1] - expected).abs() < 1e-15, "{} vs {expected}", b.net[1]);
}

#[test]
fn cost_formula_pieces() {
    let v = |x: &[f64]| DVector::from_column_slice(x);
    // 0.5% on a full round trip of one unit
    let w = v(&[0.0, 1.0]);
    let d = v(&[1.0, 0.0]);
    assert_eq!(turnover(&w, &d), 2.0);
    let net = net_return(&w, &d, &v(&[0.0, 0.02]), 0.005);
    assert!((net - 0.99 * 0.02).abs() < 1e-16);
    let d = drifted_weights(&v(&[0.25, 0.75]), &v(&[0.2, 0.0])).unwrap();
    assert!((d[0] - 0.3 / 1.05).abs() < 1e-15 && (d[1] - 0.75 / 1.05).abs() < 1e-15);
}

#[test]
fn two_period_naive_run_holds_equal_weights() {
    let p = random_panel(1, 62, 4);
    let config = BacktestConfig {
        window: 60,
        models: vec![ModelId::Cov],
        strategies: vec![StrategyId::Naive],
        ..BacktestConfig::default()
    };
    let res = run_backtest(&p, None, &config, &ModelConfig::default(), None).unwrap();
    assert_eq!(res.dates.len(), 2);
    assert!(res.benchmark.weights.iter().all(|&w| w == 0.25));
    assert!(res.series.is_empty());
}

#[test]
fn single_asset_universe_earns_the_asset_return() {
    let p = random_panel(2, 90, 1);
    let config = BacktestConfig {
        window: 60,
        models: vec![ModelId::Cov, ModelId::Ewma],
        strategies: all_strategies(),
        ..BacktestConfig::default()
    };
    let res = run_backtest(&p, None, &config, &ModelConfig::default(), None).unwrap();
    let truth: Vec<f64> = p.returns().column(0).iter().skip(60).copied().collect();
    assert_eq!(res.benchmark.gross, truth);
    for ((m, s), ser) in &res.series {
        assert!(ser.weights.iter().all(|&w| (w - 1.0).abs() < 1e-15), "{m}/{s}");
        for (g, t) in ser.gross.iter().zip(&truth) {
            assert!((g - t).abs() < 1e-15, "{m}/{s}");
        }
    }
}

#[test]
fn naive_pays_rebalancing_turnover() {
    let p = random_panel(3, 100, 3);
    let config = BacktestConfig {
        window: 60,
        models: vec![],
        strategies: vec![StrategyId::Naive],
        ..BacktestConfig::default()
    };
    let res = run_backtest(&p, None, &config, &ModelConfig::default(), None).unwrap();
    let b = &res.benchmark;
    assert!((b.turnover[0] - 1.0).abs() < 1e-15);
    for t in 1..b.turnover.len() {
        let r = p.returns().row(60 + t - 1);
        let growth = 1.0 + r.mean();
        let expected: f64 = r.iter().map(|ri| (1.0 / 3.0 - (1.0 + ri) / (3.0 * growth)).abs()).sum();
        assert!(b.turnover[t] > 0.0);
        assert!((b.turnover[t] - expected).abs() < 1e-14, "{} vs {expected}", b.turnover[t]);
    }
}

#[test]
fn free_start_skips_entry_cost() {
    let p = random_panel(4, 70, 3);
    let config = BacktestConfig {
        window: 60,
        models: vec![],
        strategies: vec![StrategyId::Naive],
        free_initial_allocation: true,
        ..BacktestConfig::default()
    };
    let res = run_backtest(&p, None, &config, &ModelConfig::default(), None).unwrap();
    assert_eq!(res.benchmark.turnover[0], 0.0);
    assert_eq!(res.benchmark.net[0], res.benchmark.gross[0]);
}

fn fixture_config(kappa: f64) -> (BacktestConfig, ModelConfig) {
    let config = BacktestConfig {
        window: 120,
        kappa,
        master_seed: 7,
        models: vec![ModelId::Cov, ModelId::Ewma, ModelId::Ccc],
        strategies: all_strategies(),
        ..BacktestConfig::default()
    };
    (config, ModelConfig::default())
}

#[test]
fn zero_cost_makes_net_equal_gross() {
    let p = common::load_fixture("weekly_5.csv");
    assert_eq!(p.n_periods(), 200);
    let (config, mc) = fixture_config(0.0);
    let res = run_backtest(&p, None, &config, &mc, None).unwrap();
    assert_eq!(res.benchmark.net, res.benchmark.gross);
    for ser in res.series.values() {
        assert_eq!(ser.net, ser.gross);
    }
}

#[test]
fn weights_respect_strategy_invariants() {
    let p = common::load_fixture("weekly_5.csv");
    let (config, mc) = fixture_config(0.005);
    let res = run_backtest(&p, None, &config, &mc, None).unwrap();
    assert_eq!(res.series.len(), 3 * 4);
    for ((m, s), ser) in &res.series {
        assert_eq!(ser.gross.len(), 80);
        for row in ser.weights.row_iter() {
            assert!((row.sum() - 1.0).abs() <= 1e-10, "{m}/{s}");
            if s.long_only() {
                assert!(row.iter().all(|&w| w >= -1e-12), "{m}/{s}");
            }
        }
        for t in 0..80 {
            let expected = (1.0 - 0.005 * ser.turnover[t]) * ser.gross[t];
            assert_eq!(ser.net[t], expected);
        }
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let p = common::load_fixture("weekly_5.csv");
    let (config, mc) = fixture_config(0.005);
    let one = run_backtest(&p, None, &config, &mc, Some(1)).unwrap();
    let many = run_backtest(&p, None, &config, &mc, Some(4)).unwrap();
    let again = run_backtest(&p, None, &config, &mc, Some(4)).unwrap();
    assert_eq!(one, many);
    assert_eq!(many, again);

    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let h1 = write_result_csvs(&one, d1.path()).unwrap();
    let h2 = write_result_csvs(&many, d2.path()).unwrap();
    assert_eq!(h1, h2);
    for (name, _) in &h1 {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

proptest! {
    #[test]
    fn drift_preserves_the_budget(w in prop::collection::vec(0.0f64..1.0, 2..8), seed in any::<u64>()) {
        let s: f64 = w.iter().sum();
        prop_assume!(s > 1e-3);
        let w = DVector::from_vec(w) / s;
        let mut rng = common::rng(seed);
        let r = DVector::from_fn(w.len(), |_, _| 0.05 * common::normal(&mut rng));
        let d = drifted_weights(&w, &r).unwrap();
        prop_assert!((d.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(d.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(net_return(&w, &d, &r, 0.0), w.dot(&r));
    }
}
