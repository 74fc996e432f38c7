//! Brute-force portfolio oracles that share no code with the solvers.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

/// Solve `a x = b` exactly over the rationals (Gauss–Jordan, first nonzero pivot).
pub fn rational_solve(a: &[Vec<BigRational>], b: &[BigRational]) -> Option<Vec<BigRational>> {
    let n = b.len();
    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let p = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v = &*v / &p;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..=n {
                    let sub = &f * &m[col][c];
                    m[r][c] = &m[r][c] - sub;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n].clone()).collect())
}

fn to_vec(x: &[BigRational]) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().map(|v| v.to_f64().unwrap()))
}

/// Exact solution of the bordered system `[Σ 1; 1ᵀ 0][w; λ] = [0; 1]`.
pub fn mvp_exact(sigma: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = sigma.nrows();
    let mut a = vec![vec![BigRational::zero(); n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = rat(sigma[(i, j)]);
        }
        a[i][n] = BigRational::one();
        a[n][i] = BigRational::one();
    }
    let mut b = vec![BigRational::zero(); n + 1];
    b[n] = BigRational::one();
    let x = rational_solve(&a, &b)?;
    Some(to_vec(&x[..n]))
}

/// Exact `Σ⁻¹μ / 1ᵀΣ⁻¹μ`.
pub fn tp_exact(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = sigma.nrows();
    let a: Vec<Vec<BigRational>> = (0..n).map(|i| (0..n).map(|j| rat(sigma[(i, j)])).collect()).collect();
    let b: Vec<BigRational> = mu.iter().map(|&v| rat(v)).collect();
    let x = rational_solve(&a, &b)?;
    let s = x.iter().fold(BigRational::zero(), |acc, v| acc + v);
    if s.abs() < BigRational::new(BigInt::one(), BigInt::from(10).pow(12)) {
        return None;
    }
    let w: Vec<BigRational> = x.iter().map(|v| v / &s).collect();
    Some(to_vec(&w))
}

pub fn quad(sigma: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    w.dot(&(sigma * w))
}

/// Minimum variance over the simplex by trying every support set: solve the
/// equality-constrained problem on the support and keep feasible candidates.
pub fn con_mvp_enumerate(sigma: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let n = sigma.nrows();
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = idx.len();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                kkt[(a, b)] = sigma[(i, j)];
            }
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
        }
        let mut rhs = DVector::zeros(k + 1);
        rhs[k] = 1.0;
        let Some(x) = kkt.full_piv_lu().solve(&rhs) else { continue };
        if x.iter().take(k).any(|&v| !(v >= -1e-12)) {
            continue;
        }
        let mut w = DVector::zeros(n);
        for (a, &i) in idx.iter().enumerate() {
            w[i] = x[a].max(0.0);
        }
        w /= w.sum();
        let f = quad(sigma, &w);
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((w, f));
        }
    }
    best.expect("a singleton support is always feasible")
}

/// Scan `f` on `[lo, hi]` at `step`, then golden-section search around the
/// best grid point.
pub fn grid_refine<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    let mut best = (lo, f(lo));
    for k in 1..=n {
        let x = lo + k as f64 * step;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Pairwise exchange descent on the simplex: repeatedly move mass between two
/// coordinates with an exact, bound-clipped line search.
pub fn pairwise_refine(sigma: &DMatrix<f64>, w0: &DVector<f64>) -> DVector<f64> {
    let n = w0.len();
    let mut w = w0.clone();
    for _ in 0..20_000 {
        let g = sigma * &w;
        let mut improved = false;
        for i in 0..n {
            for j in 0..n {
                if i == j || w[j] <= 0.0 {
                    continue;
                }
                // direction e_i − e_j, step t ∈ (0, w_j]
                let slope = g[i] - g[j];
                if slope >= 0.0 {
                    continue;
                }
                let curv = sigma[(i, i)] + sigma[(j, j)] - 2.0 * sigma[(i, j)];
                let t = if curv > 0.0 { (-slope / curv).min(w[j]) } else { w[j] };
                if t * -slope > 1e-30 {
                    w[i] += t;
                    w[j] -= t;
                    improved = true;
                    break;
                }
            }
            if improved {
                break;
            }
        }
        if !improved {
            break;
        }
    }
    w
}

/// Best point of the simplex lattice with spacing `1/steps`.
pub fn simplex_lattice(sigma: &DMatrix<f64>, steps: usize) -> DVector<f64> {
    let n = sigma.nrows();
    let mut best = (f64::INFINITY, vec![0usize; n]);
    let mut counts = vec![0usize; n];
    fn walk(
        k: usize,
        left: usize,
        counts: &mut Vec<usize>,
        sigma: &DMatrix<f64>,
        steps: usize,
        best: &mut (f64, Vec<usize>),
    ) {
        let n = counts.len();
        if k == n - 1 {
            counts[k] = left;
            let h = 1.0 / steps as f64;
            let mut f = 0.0;
            for i in 0..n {
                if counts[i] == 0 {
                    continue;
                }
                for j in 0..n {
                    f += sigma[(i, j)] * counts[i] as f64 * counts[j] as f64;
                }
            }
            f *= h * h;
            if f < best.0 {
                *best = (f, counts.clone());
            }
            return;
        }
        for c in 0..=left {
            counts[k] = c;
            walk(k + 1, left - c, counts, sigma, steps, best);
        }
    }
    walk(0, steps, &mut counts, sigma, steps, &mut best);
    DVector::from_iterator(n, best.1.iter().map(|&c| c as f64 / steps as f64))
}

/// First-order conditions of the simplex-constrained problem: `(Σw)ᵢ` equals
/// `wᵀΣw` on the support and is no smaller off it.
pub fn simplex_kkt(sigma: &DMatrix<f64>, w: &DVector<f64>, tol: f64) -> bool {
    let g = sigma * w;
    let lam = w.dot(&g);
    (w.sum() - 1.0).abs() <= 1e-10
        && w.iter().zip(g.iter()).all(|(&wi, &gi)| {
            if wi > 0.0 {
                (gi - lam).abs() <= tol
            } else {
                wi == 0.0 && gi >= lam - tol
            }
        })
}
