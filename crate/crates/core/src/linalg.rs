//! Small dense linear-algebra helpers shared by the estimators and solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// Column means of a T×N matrix, accumulated relative to the first row so
/// that constant columns give their value exactly.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let t = x.nrows() as f64;
    DVector::from_iterator(
        x.ncols(),
        x.column_iter().map(|c| {
            let Some(&x0) = c.iter().next() else { return f64::NAN };
            x0 + c.iter().map(|v| v - x0).sum::<f64>() / t
        }),
    )
}

/// Subtract column means.
pub fn demean(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mu = column_means(x);
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    out
}

/// `Σ_t x_t x_tᵀ / divisor` over the rows of `x`.
pub fn cross_product(x: &DMatrix<f64>, divisor: f64) -> DMatrix<f64> {
    let mut s = x.tr_mul(x);
    s /= divisor;
    symmetrize(&s)
}

/// Sample covariance of the rows (divisor T − 1).
pub fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let t = x.nrows();
    cross_product(&demean(x), (t as f64 - 1.0).max(1.0))
}

/// Normalise a covariance matrix to a correlation matrix; the diagonal is
/// set to exactly 1.
pub fn correlation_from_cov(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    let sd: Vec<f64> = (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if sd[i] > 0.0 && sd[j] > 0.0 {
            cov[(i, j)] / (sd[i] * sd[j])
        } else {
            0.0
        }
    })
}

/// `D R D` with `D = diag(sd)`.
pub fn scale_correlation(corr: &DMatrix<f64>, sd: &[f64]) -> DMatrix<f64> {
    let n = corr.nrows();
    DMatrix::from_fn(n, n, |i, j| corr[(i, j)] * sd[i] * sd[j])
}

pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

pub fn is_symmetric(s: &DMatrix<f64>) -> bool {
    s.is_square()
        && (0..s.nrows()).all(|i| (0..i).all(|j| s[(i, j)] == s[(j, i)]))
}

pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(s))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky factor, or `None` when the matrix is not numerically positive
/// definite.
pub fn cholesky(s: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(s.clone())
}

/// `log det S` from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

/// Spectral radius of a general square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Solve `A x = b` for symmetric positive definite `A`, falling back to a
/// ridge-regularised system when the factorisation fails. Returns the
/// solution and whether the ridge was needed.
pub fn spd_solve_ridge(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<(DMatrix<f64>, bool)> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Some((x, false));
        }
    }
    let ridge = 1e-8 * a.trace().abs().max(f64::MIN_POSITIVE);
    let mut reg = a.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += ridge;
    }
    Cholesky::new(reg).map(|ch| (ch.solve(b), true))
}
