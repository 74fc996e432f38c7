//! Simulation-recovery cases. Each returns whether one seed met its
//! tolerance, plus a short description for failure messages.

use nalgebra::DMatrix;

use super::{frobenius_rel, rng};
use volport::estimators::{
    bekk_fit, dcc_from_margins, fit_margins, garch11_fit, johansen_rank, msv::sv_posterior, rsvar_fit, var_fit,
    vecm_fit, BekkOptions, DccSpec, GarchOptions, McmcConfig, RsvarOptions,
};
use volport::linalg;

pub struct Case {
    pub pass: bool,
    pub detail: String,
}

fn case(pass: bool, detail: String) -> Case {
    Case { pass, detail }
}

/// GARCH(1,1) with (ω, α, β) = (0.1, 0.05, 0.90), M = 5000.
pub fn garch(seed: u64) -> Case {
    let mut r = rng(seed);
    let x = super::garch11(&mut r, 0.1, 0.05, 0.90, 5000);
    match garch11_fit(&x, &GarchOptions::default()) {
        Ok(f) => case(
            (f.alpha - 0.05).abs() <= 0.05 && (f.beta - 0.90).abs() <= 0.08,
            format!("alpha {:.4} beta {:.4}", f.alpha, f.beta),
        ),
        Err(e) => case(false, e.to_string()),
    }
}

/// DCC(1,1) with (a, b) = (0.05, 0.90), M = 3000.
pub fn dcc(seed: u64) -> Case {
    let mut r = rng(seed);
    let x = super::dcc2(&mut r, 0.05, 0.90, 0.4, 3000);
    let opts = GarchOptions::default();
    let fit = fit_margins(&x, &opts).and_then(|m| {
        dcc_from_margins(
            &m,
            DccSpec {
                asymmetric: false,
                fixed_g: None,
            },
            &opts.optim,
        )
    });
    match fit {
        Ok(f) => {
            let s = f.params.a + f.params.b;
            case((s - 0.95).abs() <= 0.1, format!("a {:.4} b {:.4}", f.params.a, f.params.b))
        }
        Err(e) => case(false, e.to_string()),
    }
}

/// Diagonal BEKK, N = 2, M = 3000: fitted unconditional covariance against
/// the sample covariance of the simulated data.
pub fn bekk(seed: u64) -> Case {
    let mut r = rng(seed);
    let (x, _) = super::diag_bekk2(&mut r, 3000);
    let sample = linalg::covariance(&x);
    match bekk_fit(&x, false, &BekkOptions::default()) {
        Ok(f) => match f.params.unconditional() {
            Some(u) => {
                let d = frobenius_rel(&u, &sample);
                case(d <= 0.2, format!("relative Frobenius distance {d:.4}"))
            }
            None => case(false, "no unconditional covariance".into()),
        },
        Err(e) => case(false, e.to_string()),
    }
}

/// Two regimes with covariances I and 9I, persistence 0.98, M = 1000.
pub fn rsvar(seed: u64) -> Case {
    let mut r = rng(seed);
    let x = super::regime_switching(&mut r, 2, 1000, 0.98);
    match rsvar_fit(&x, &RsvarOptions::default(), seed) {
        Ok(f) => {
            let lo = &f.covs[0];
            let hi = &f.covs[1];
            let within = |c: &DMatrix<f64>, truth: f64| (0..2).all(|i| (c[(i, i)] / truth - 1.0).abs() <= 0.3);
            let ordered = lo.trace() < hi.trace();
            case(
                ordered && within(lo, 1.0) && within(hi, 9.0),
                format!(
                    "low diag ({:.3}, {:.3}) high diag ({:.3}, {:.3})",
                    lo[(0, 0)],
                    lo[(1, 1)],
                    hi[(0, 0)],
                    hi[(1, 1)]
                ),
            )
        }
        Err(e) => case(false, e.to_string()),
    }
}

/// SV with (μ, φ, σ) = (−1, 0.95, 0.2), M = 3000: posterior mean of φ.
pub fn sv(seed: u64) -> Case {
    let mut r = rng(seed);
    let x = super::sv(&mut r, -1.0, 0.95, 0.2, 3000);
    match sv_posterior(&x, &McmcConfig::default(), seed) {
        Ok(p) => case((p.phi - 0.95).abs() <= 0.05, format!("phi {:.4}", p.phi)),
        Err(e) => case(false, e.to_string()),
    }
}

/// Stable VAR(2), M = 2000: every lag coefficient within 3 standard errors.
pub fn var2(seed: u64) -> Case {
    let mut r = rng(seed);
    let model = super::Var2::stable_pair();
    let x = model.simulate(&mut r, 2000);
    match var_fit(&x, 2) {
        Ok(f) => {
            let mut worst = 0.0f64;
            for (l, truth) in [&model.a1, &model.a2].into_iter().enumerate() {
                for i in 0..2 {
                    for j in 0..2 {
                        let z = (f.lags[l][(i, j)] - truth[(i, j)]) / f.lag_std_errors[l][(i, j)];
                        worst = worst.max(z.abs());
                    }
                }
            }
            case(worst <= 3.0, format!("largest |t| against truth {worst:.3}"))
        }
        Err(e) => case(false, e.to_string()),
    }
}

/// Johansen rank on independent random walks, one common trend, and a
/// stationary VAR, M = 1000. Returns the three selected ranks.
pub fn johansen_ranks(seed: u64) -> [usize; 3] {
    let mut r = rng(seed);
    let walks = super::random_walks(&mut r, 2, 1000);
    let trend = super::one_common_trend(&mut r, 1000);
    let stationary = super::Var2::stable_pair().simulate(&mut r, 1000);
    [
        johansen_rank(&walks, 2).unwrap_or(usize::MAX),
        johansen_rank(&trend, 2).unwrap_or(usize::MAX),
        johansen_rank(&stationary, 2).unwrap_or(usize::MAX),
    ]
}

/// Error-correction system with α = (−0.2, 0.1), M = 2000: adjustment
/// coefficients within 3 standard errors.
pub fn vecm_alpha(seed: u64) -> Case {
    let mut r = rng(seed);
    let x = super::vecm_system(&mut r, [-0.2, 0.1], 2000);
    match vecm_fit(&x, 2) {
        Ok(f) if f.rank == 1 => {
            let t: Vec<f64> = (0..2)
                .map(|i| (f.alpha[(i, 0)] - [-0.2, 0.1][i]) / f.alpha_std_errors[(i, 0)])
                .collect();
            case(
                t.iter().all(|v| v.abs() <= 3.0),
                format!("alpha ({:.4}, {:.4}), t {:?}", f.alpha[(0, 0)], f.alpha[(1, 0)], t),
            )
        }
        Ok(f) => case(false, format!("rank {}", f.rank)),
        Err(e) => case(false, e.to_string()),
    }
}
