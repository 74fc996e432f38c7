mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use volport::backtest::{run_backtest, BacktestConfig};
use volport::estimators::{ModelConfig, ModelId};
use volport::stats::{
    brown_forsythe, compute_metrics, diebold_mariano, forecast_errors, lw_sharpe_test, newey_west_lag, sharpe,
    volatility, BootstrapOptions, StatsError, StatsOptions,
};
use volport::strategies::StrategyId;

fn gaussian(seed: u64, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    let mut rng = common::rng(seed);
    (0..n).map(|_| mean + sd * common::normal(&mut rng)).collect()
}

#[test]
fn sharpe_and_volatility_hand_values() {
    assert_eq!(sharpe(&[0.01, -0.01]).unwrap(), 0.0);
    assert_eq!(sharpe(&[0.02, 0.02, 0.02]), Err(StatsError::Degenerate));
    assert!((sharpe(&[0.01, 0.03]).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(volatility(&[0.03; 5]).unwrap(), 0.0);
    assert!((volatility(&[0.0, 0.02]).unwrap() - 0.02 / 2f64.sqrt()).abs() < 1e-15);
    let x = gaussian(1, 50, 0.0, 1.0);
    let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    assert!((volatility(&x2).unwrap() - 2.0 * volatility(&x).unwrap()).abs() < 1e-14);
}

#[test]
fn lw_identity_and_power() {
    let a = gaussian(2, 500, 0.001, 0.02);
    let t = lw_sharpe_test(&a, &a, None).unwrap();
    assert_eq!((t.delta, t.p), (0.0, 1.0));

    let b = gaussian(3, 2000, 0.001, 0.02);
    let a: Vec<f64> = b.iter().map(|v| v + 0.005).collect();
    let t = lw_sharpe_test(&a, &b, None).unwrap();
    assert!(t.delta > 0.0 && t.p < 0.01, "p {}", t.p);

    assert!(matches!(lw_sharpe_test(&a[..100], &b[..99], None), Err(StatsError::LengthMismatch(..))));
    assert!(matches!(lw_sharpe_test(&a[..10], &b[..10], None), Err(StatsError::TooShort { .. })));
}

/// Closed-form asymptotic variance of the Sharpe difference for jointly
/// Gaussian i.i.d. returns.
fn gaussian_sharpe_diff_var(sa: f64, sb: f64, rho: f64, t: f64) -> f64 {
    (2.0 - 2.0 * rho + 0.5 * (sa * sa + sb * sb - 2.0 * sa * sb * rho * rho)) / t
}

#[test]
fn lw_standard_error_matches_gaussian_closed_form() {
    let n = 20_000;
    let mut rng = common::rng(4);
    let rho: f64 = 0.6;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let z1 = common::normal(&mut rng);
        let z2 = rho * z1 + (1.0 - rho * rho).sqrt() * common::normal(&mut rng);
        a.push(0.10 + z1);
        b.push(0.02 + z2);
    }
    let t = lw_sharpe_test(&a, &b, None).unwrap();
    let se = t.delta / t.stat;
    let truth = gaussian_sharpe_diff_var(0.10, 0.02, rho, n as f64).sqrt();
    assert!((se / truth - 1.0).abs() < 0.1, "se {se} vs {truth}");
}

#[test]
fn bootstrap_is_seeded() {
    let a = gaussian(5, 300, 0.002, 0.02);
    let b = gaussian(6, 300, 0.001, 0.02);
    let opts = BootstrapOptions { reps: 300, block: 5, seed: 11 };
    let p1 = lw_sharpe_test(&a, &b, Some(&opts)).unwrap().p;
    let p2 = lw_sharpe_test(&a, &b, Some(&opts)).unwrap().p;
    assert_eq!(p1, p2);
    assert!(p1 > 0.0 && p1 <= 1.0);
    let other = BootstrapOptions { seed: 12, ..opts };
    assert_ne!(lw_sharpe_test(&a, &b, Some(&other)).unwrap().p, p1);
}

fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
}

/// Two-group ANOVA F equals the squared pooled two-sample t statistic.
fn bf_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let dev = |x: &[f64]| -> Vec<f64> {
        let m = median(x);
        x.iter().map(|v| (v - m).abs()).collect()
    };
    let (za, zb) = (dev(a), dev(b));
    let (na, nb) = (za.len() as f64, zb.len() as f64);
    let ma = za.iter().sum::<f64>() / na;
    let mb = zb.iter().sum::<f64>() / nb;
    let va = za.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / (na - 1.0);
    let vb = zb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (nb - 1.0);
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let p = 2.0 * StudentsT::new(0.0, 1.0, na + nb - 2.0).unwrap().sf(t.abs());
    (t * t, p)
}

#[test]
fn brown_forsythe_matches_pooled_t() {
    let a = gaussian(7, 37, 0.0, 1.0);
    let b = gaussian(8, 52, 0.3, 1.6);
    let r = brown_forsythe(&a, &b).unwrap();
    let (f, p) = bf_oracle(&a, &b);
    assert!((r.stat / f - 1.0).abs() < 1e-10, "{} vs {f}", r.stat);
    assert!((r.p - p).abs() < 1e-8, "{} vs {p}", r.p);
}

#[test]
fn brown_forsythe_examples() {
    let a = gaussian(9, 1000, 0.0, 1.0);
    let r = brown_forsythe(&a, &a).unwrap();
    assert_eq!((r.stat, r.p), (0.0, 1.0));
    let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
    assert!(brown_forsythe(&a, &b).unwrap().p < 0.01);
}

/// Long-run variance of the mean as a full double sum with Bartlett weights.
fn dm_oracle(ea: &[f64], eb: &[f64]) -> f64 {
    let d: Vec<f64> = ea.iter().zip(eb).map(|(a, b)| a * a - b * b).collect();
    let n = d.len();
    let lag = newey_west_lag(n);
    let m = d.iter().sum::<f64>() / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let k = i.abs_diff(j);
            if k <= lag {
                s += (1.0 - k as f64 / (lag + 1) as f64) * (d[i] - m) * (d[j] - m);
            }
        }
    }
    m / (s / (n as f64 * n as f64)).sqrt()
}

#[test]
fn diebold_mariano_matches_double_sum() {
    assert_eq!(newey_west_lag(100), 4);
    assert_eq!(newey_west_lag(500), 5);
    let ea = gaussian(10, 300, 0.0, 1.0);
    let eb = gaussian(11, 300, 0.0, 1.2);
    let r = diebold_mariano(&ea, &eb).unwrap();
    let z = dm_oracle(&ea, &eb);
    assert!((r.stat / z - 1.0).abs() < 1e-10, "{} vs {z}", r.stat);
}

#[test]
fn diebold_mariano_examples() {
    let e = gaussian(12, 1000, 0.0, 1.0);
    let r = diebold_mariano(&e, &e).unwrap();
    assert_eq!((r.stat, r.p), (0.0, 1.0));
    let e2: Vec<f64> = e.iter().map(|v| 2.0 * v).collect();
    let r = diebold_mariano(&e2, &e).unwrap();
    assert!(r.p < 0.01 && r.stat > 0.0);
}

#[test]
fn forecast_error_fixtures() {
    let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.2, 0.8]);
    let r = DMatrix::from_row_slice(2, 2, &[0.01, 0.03, -0.02, 0.05]);
    let mu = DVector::from_column_slice(&[0.01, 0.02]);
    let e = forecast_errors(&w, &r, &mu).unwrap();
    // 0.02 − 0.015 and 0.036 − 0.018
    assert!((e[0] - 0.005).abs() < 1e-15);
    assert!((e[1] - 0.018).abs() < 1e-15);

    let flat = DMatrix::from_fn(4, 2, |_, j| mu[j]);
    let w4 = DMatrix::from_element(4, 2, 0.5);
    assert!(forecast_errors(&w4, &flat, &mu).unwrap().iter().all(|&v| v.abs() < 1e-18));
    assert!(forecast_errors(&w, &flat, &mu).is_err());
}

#[test]
fn metric_report_on_fixture_backtest() {
    let p = common::load_fixture("weekly_5.csv");
    let config = BacktestConfig {
        window: 120,
        models: vec![ModelId::Cov],
        strategies: vec![StrategyId::Naive, StrategyId::Mvp, StrategyId::ConMvp],
        ..BacktestConfig::default()
    };
    let res = run_backtest(&p, None, &config, &ModelConfig::default(), None).unwrap();
    let rep = compute_metrics("fixture", &res, &StatsOptions::default());
    assert_eq!(rep.rows.len(), 3);
    let bench = rep.benchmark().unwrap();
    assert_eq!(bench.sharpe, sharpe(&res.benchmark.gross).unwrap());
    for row in &rep.rows {
        assert!(row.volatility >= 0.0 && row.sharpe.is_finite());
        for p in [row.p_sharpe, row.p_sharpe_net, row.p_vol_bf, row.p_vol_dm].into_iter().flatten() {
            assert!((0.0..=1.0).contains(&p));
        }
    }
    let mvp = rep.row(ModelId::Cov, StrategyId::Mvp).unwrap();
    assert_eq!(mvp.better_vol, mvp.volatility < bench.volatility);
    assert!(mvp.p_sharpe.is_some() && mvp.p_vol_dm.is_some());
}

fn series(len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    any::<u64>().prop_map(move |seed| {
        let mut rng = common::rng(seed);
        let a: Vec<f64> = (0..len).map(|_| 0.001 + 0.02 * common::normal(&mut rng)).collect();
        let b: Vec<f64> = (0..len).map(|_| 0.002 + 0.03 * common::normal(&mut rng)).collect();
        (a, b)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sharpe_is_scale_invariant((a, _) in series(60), c in 0.01f64..100.0) {
        let s: Vec<f64> = a.iter().map(|v| c * v).collect();
        prop_assert!((sharpe(&s).unwrap() - sharpe(&a).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn lw_is_antisymmetric((a, b) in series(120)) {
        let ab = lw_sharpe_test(&a, &b, None).unwrap();
        let ba = lw_sharpe_test(&b, &a, None).unwrap();
        prop_assert_eq!(ab.delta, -ba.delta);
        prop_assert!((ab.stat + ba.stat).abs() <= 1e-12 * ab.stat.abs().max(1.0));
        prop_assert!((ab.p - ba.p).abs() <= 1e-12);
    }

    #[test]
    fn dm_is_antisymmetric((a, b) in series(120)) {
        let ab = diebold_mariano(&a, &b).unwrap();
        let ba = diebold_mariano(&b, &a).unwrap();
        prop_assert!((ab.stat + ba.stat).abs() <= 1e-12 * ab.stat.abs().max(1.0));
        prop_assert!((ab.p - ba.p).abs() <= 1e-12);
    }

    #[test]
    fn bf_ignores_location_shifts((a, b) in series(80), ca in -1.0f64..1.0, cb in -1.0f64..1.0) {
        let base = brown_forsythe(&a, &b).unwrap();
        let sa: Vec<f64> = a.iter().map(|v| v + ca).collect();
        let sb: Vec<f64> = b.iter().map(|v| v + cb).collect();
        let shifted = brown_forsythe(&sa, &sb).unwrap();
        prop_assert!((shifted.stat - base.stat).abs() <= 1e-8 * base.stat.max(1.0));
        prop_assert!((shifted.p - base.p).abs() <= 1e-8);
    }
}
