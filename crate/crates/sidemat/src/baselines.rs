//! Comparator estimators: double projection, plain nuclear-norm
//! penalization, spectral truncation with known or estimated rank, and the
//! spectral recombination method for block-missing panels.

use crate::estimate::{solve_completion, CompletionResult};
use crate::lowrank::{
    default_k_max, eigenvalue_ratio_rank, full_svd, svt, truncated_svd,
};
use crate::mask::{BlockShape, ObservationMask};
use crate::noise::sigma_spectral_median;
use crate::sieve::Projector;
use crate::{Error, Matrix, Result};

/// `P_X Y P_Z`.
pub fn double_projection(y: &Matrix, px: &Projector, pz: &Projector) -> Result<Matrix> {
    if px.dim() != y.nrows() || pz.dim() != y.ncols() {
        return Err(Error::Dimension(
            "projector dimensions do not match the panel".to_string(),
        ));
    }
    Ok(&px.values * y * &pz.values)
}

/// `p^{-1} P_X (Omega o Y) P_Z`.
pub fn double_projection_mar(
    y: &Matrix,
    mask: &ObservationMask,
    p: f64,
    px: &Projector,
    pz: &Projector,
) -> Result<Matrix> {
    if p.is_nan() || p <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "observation probability must be positive, got {p}"
        )));
    }
    let masked = mask.apply(y)?;
    Ok(double_projection(&masked, px, pz)? / p)
}

/// Plain nuclear-norm estimator `svt(Y, nu / 2)`, the minimizer of
/// `||Y - A||_F^2 + nu ||A||_*`.
pub fn nuclear_norm_full(y: &Matrix, nu: f64) -> Result<Matrix> {
    if !nu.is_finite() || nu < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "penalty must be a nonnegative real, got {nu}"
        )));
    }
    svt(y, nu / 2.0)
}

/// Automatic penalty for the plain nuclear-norm baseline:
/// `nu = c sigma (sqrt(N) + sqrt(T))` with the same spectral-median noise
/// scale the main estimator resolves from its residual block, so the two are
/// tuned on equal terms.
pub fn nuclear_norm_auto_penalty(
    y: &Matrix,
    px: &Projector,
    pz: &Projector,
    c: f64,
) -> Result<f64> {
    let (n, t) = y.shape();
    if px.rank >= n || pz.rank >= t {
        return Err(Error::Degenerate("design too wide".to_string()));
    }
    let resid = px.complement_apply(&(y - y * &pz.values));
    let s = full_svd(&resid)?;
    let sigma = sigma_spectral_median(s.singular_values.as_slice(), n - px.rank, t - pz.rank)?;
    Ok(c * sigma * ((n as f64).sqrt() + (t as f64).sqrt()))
}

/// Nuclear-norm completion baseline for missing-at-random panels.
pub fn nuclear_norm_mar(
    y: &Matrix,
    mask: &ObservationMask,
    nu: f64,
    m_max: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CompletionResult> {
    solve_completion(y, mask, nu, m_max, tol, max_iter)
}

/// Spectral estimator with known rank: best rank-K approximation of `Y`.
pub fn spectral_oracle(y: &Matrix, k: usize) -> Result<Matrix> {
    truncated_svd(y, k)
}

/// Spectral estimator with the rank picked by the eigenvalue-ratio method.
/// Returns the truncation and the rank it used.
pub fn spectral_estimated(y: &Matrix, k_max: usize) -> Result<(Matrix, usize)> {
    let s = full_svd(y)?;
    let k = eigenvalue_ratio_rank(s.singular_values.as_slice(), k_max)?;
    Ok((truncated_svd(y, k)?, k))
}

/// Convenience wrapper using the default `k_max = min(20, min(N, T)/2)`.
pub fn spectral_estimated_default(y: &Matrix) -> Result<(Matrix, usize)> {
    spectral_estimated(y, default_k_max(y.nrows(), y.ncols()))
}

/// Spectral recombination for block-missing panels: the same pipeline as the
/// side-information estimator except that the tall and wide factors come from
/// plain truncated SVDs of the raw submatrices.
pub fn mnar_spectral(y: &Matrix, shape: &BlockShape, k: usize) -> Result<Matrix> {
    if y.nrows() != shape.n || y.ncols() != shape.t {
        return Err(Error::Dimension(format!(
            "panel is {}x{} but the block shape says {}x{}",
            y.nrows(),
            y.ncols(),
            shape.n,
            shape.t
        )));
    }
    if k == 0 || k > shape.n0.min(shape.t0) {
        return Err(Error::InvalidArgument(format!(
            "rank {k} outside 1..=min(N0, T0) = {}",
            shape.n0.min(shape.t0)
        )));
    }
    let y_tall = y.view((0, 0), (shape.n, shape.t0)).into_owned();
    let y_wide = y.view((0, 0), (shape.n0, shape.t)).into_owned();
    let factors_tall = full_svd(&y_tall)?;
    let factors_wide = full_svd(&y_wide)?;
    if factors_wide.singular_values[0] == 0.0 || factors_tall.singular_values[0] == 0.0 {
        return Ok(Matrix::zeros(shape.n, shape.t));
    }
    let achievable = factors_tall
        .numerical_rank()
        .min(factors_wide.numerical_rank());
    if k > achievable {
        return Err(Error::RankUnachievable {
            requested: k,
            achievable,
            detail: "raw submatrix spectra".to_string(),
        });
    }
    crate::estimate::mnar_recombine(&factors_tall, &factors_wide, shape.n0, k)
}
