//! Quasi-Newton minimisation used by the likelihood-based estimators.
//!
//! BFGS with an Armijo backtracking line search. Only iterates that strictly
//! lower the objective are accepted, so the recorded objective trace is
//! monotone. Infeasible trial points (constraint violations reported by
//! [`Objective::feasible`], or non-finite values) are treated as failures of
//! the step and shrink it.

use serde::{Deserialize, Serialize};

/// A smooth function to minimise.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Fill `grad` and return the value. Defaults to central differences.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        central_gradient(|p| self.value(p), x, grad);
        self.value(x)
    }

    fn feasible(&self, _x: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Convergence when `‖g‖∞ ≤ gradient_tol · (1 + |f|)`.
    pub gradient_tol: f64,
    /// Convergence when the relative decrease of `f` stays below this.
    pub f_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            gradient_tol: 1e-6,
            f_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each accepted iterate, starting with `f(x0)`.
    pub trace: Vec<f64>,
}

/// Central finite-difference gradient.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], grad: &mut [f64]) {
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimise `obj` from `x0`.
pub fn minimize<O: Objective + ?Sized>(obj: &O, x0: &[f64], opts: &OptimOptions) -> OptimResult {
    let n = obj.dim();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj.value_and_gradient(&x, &mut g);
    let mut trace = vec![f];
    if !f.is_finite() || !obj.feasible(&x) {
        return OptimResult {
            x,
            value: f,
            iterations: 0,
            converged: false,
            trace,
        };
    }
    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut converged = false;
    let mut iterations = 0;
    let mut stalls = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    while iterations < opts.max_iter {
        if g.iter().all(|v| v.is_finite())
            && g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.gradient_tol * (1.0 + f.abs())
        {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) || !slope.is_finite() {
            h = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        let accepted = line_search(obj, &x, f, &dir, slope, &mut x_new);
        let (step_ok, f_trial) = match accepted {
            Some(v) => (true, v),
            None => (false, f),
        };
        if !step_ok {
            // retry once along steepest descent with a fresh metric
            if h != identity(n) {
                h = identity(n);
                continue;
            }
            let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            converged = gnorm <= 1e-3 * (1.0 + f.abs());
            break;
        }
        let f_new = obj.value_and_gradient(&x_new, &mut g_new);
        let f_new = if f_new.is_finite() { f_new } else { f_trial };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            bfgs_update(&mut h, &s, &y, sy);
        }
        let rel = (f - f_new) / (1.0 + f.abs());
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
        trace.push(f);
        if rel < opts.f_tol {
            stalls += 1;
            if stalls >= 3 {
                converged = true;
                break;
            }
        } else {
            stalls = 0;
        }
    }
    OptimResult {
        x,
        value: f,
        iterations,
        converged,
        trace,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Backtracking Armijo search; writes the accepted point to `out` and
/// returns its value.
fn line_search<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    f: f64,
    dir: &[f64],
    slope: f64,
    out: &mut [f64],
) -> Option<f64> {
    let mut step = 1.0;
    for _ in 0..60 {
        for i in 0..x.len() {
            out[i] = x[i] + step * dir[i];
        }
        if obj.feasible(out) {
            let ft = obj.value(out);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope && ft < f {
                return Some(ft);
            }
        }
        step *= 0.5;
    }
    None
}
