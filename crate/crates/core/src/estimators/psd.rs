use nalgebra::{DMatrix, SymmetricEigen};

use super::EstimateError;
use crate::linalg;

/// Symmetrise and clip eigenvalues below `floor`.
///
/// A matrix that is already exactly symmetric with smallest eigenvalue
/// `≥ floor` is returned untouched. The boolean reports whether a repair
/// happened.
pub fn ensure_psd(s: &DMatrix<f64>, floor: f64) -> Result<(DMatrix<f64>, bool), EstimateError> {
    if !s.is_square() {
        return Err(EstimateError::Degenerate("covariance is not square".into()));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(EstimateError::NonFinite);
    }
    let symmetric = linalg::is_symmetric(s);
    let sym = if symmetric { s.clone() } else { linalg::symmetrize(s) };
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if symmetric && min >= floor {
        return Ok((sym, false));
    }
    if min >= floor {
        return Ok((sym, true));
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    out = linalg::symmetrize(&out);
    // rounding in the reconstruction can leave the smallest eigenvalue a
    // hair under the floor; nudge the diagonal until it clears
    let mut bump = 0.0;
    for _ in 0..8 {
        let m = linalg::min_eigenvalue(&out);
        if m >= floor {
            break;
        }
        bump = (floor - m).max(bump * 2.0).max(f64::EPSILON * floor.abs());
        for i in 0..out.nrows() {
            out[(i, i)] += bump;
        }
    }
    Ok((out, true))
}

/// Absolute eigenvalue floor for a covariance: `rel_floor × mean diagonal`.
pub fn scaled_floor(s: &DMatrix<f64>, rel_floor: f64) -> f64 {
    let n = s.nrows().max(1) as f64;
    let avg = s.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n;
    if avg > 0.0 && avg.is_finite() {
        rel_floor * avg
    } else {
        rel_floor
    }
}
