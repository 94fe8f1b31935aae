//! Dense SVD utilities: soft-thresholding of singular values (the nuclear-norm
//! prox), best rank-K approximation, eigenvalue-ratio rank estimation, and the
//! orthogonal-Procrustes subspace distance.

use crate::{ensure_finite, Error, Matrix, Result, Vector};

/// Thin SVD factors `A = U diag(s) V^T` with `s` sorted descending.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v: Matrix,
}

impl SvdFactors {
    /// Multiply the factors back together.
    pub fn reconstruct(&self) -> Matrix {
        let scaled = Matrix::from_fn(self.u.nrows(), self.u.ncols(), |i, j| {
            self.u[(i, j)] * self.singular_values[j]
        });
        scaled * self.v.transpose()
    }

    /// Leading `k` columns of `U`.
    pub fn top_left(&self, k: usize) -> Matrix {
        self.u.columns(0, k).into_owned()
    }

    /// Leading `k` columns of `V`.
    pub fn top_right(&self, k: usize) -> Matrix {
        self.v.columns(0, k).into_owned()
    }

    /// Numerical rank at tolerance `max(dims) * eps * s_1`.
    pub fn numerical_rank(&self) -> usize {
        let s1 = self.singular_values.get(0).copied().unwrap_or(0.0);
        let tol = self.u.nrows().max(self.v.nrows()) as f64 * f64::EPSILON * s1;
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }
}

/// Thin SVD of a dense matrix, singular values sorted descending.
pub fn full_svd(a: &Matrix) -> Result<SvdFactors> {
    ensure_finite(a, "matrix for SVD")?;
    let svd = nalgebra::SVD::try_new(a.clone(), true, true, f64::EPSILON, 0)
        .ok_or(Error::SvdFailure)?;
    Ok(SvdFactors {
        u: svd.u.expect("u requested"),
        singular_values: svd.singular_values,
        v: svd.v_t.expect("v_t requested").transpose(),
    })
}

/// Singular-value soft-thresholding: `U diag(max(s - tau, 0)) V^T`.
///
/// This is the closed-form minimizer of `||B - A||_F^2 + 2 tau ||A||_*`.
/// When `tau >= s_1` the result is exactly the zero matrix.
pub fn svt(b: &Matrix, tau: f64) -> Result<Matrix> {
    Ok(svt_ranked(b, tau)?.0)
}

/// `svt` together with the rank that survives the threshold.
pub fn svt_ranked(b: &Matrix, tau: f64) -> Result<(Matrix, usize)> {
    let factors = full_svd(b)?;
    svt_from_factors(&factors, tau, b.shape())
}

/// Soft-threshold precomputed SVD factors.
pub fn svt_from_factors(
    factors: &SvdFactors,
    tau: f64,
    shape: (usize, usize),
) -> Result<(Matrix, usize)> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold must be a nonnegative real, got {tau}"
        )));
    }
    let kept: Vec<(usize, f64)> = factors
        .singular_values
        .iter()
        .enumerate()
        .filter_map(|(k, &s)| (s > tau).then_some((k, s - tau)))
        .collect();
    if kept.is_empty() {
        return Ok((Matrix::zeros(shape.0, shape.1), 0));
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for &(k, s) in &kept {
        let u = factors.u.column(k);
        let v = factors.v.column(k);
        out.ger(s, &u, &v, 1.0);
    }
    Ok((out, kept.len()))
}

/// Best rank-`k` approximation in Frobenius norm.
pub fn truncated_svd(a: &Matrix, k: usize) -> Result<Matrix> {
    let min_dim = a.nrows().min(a.ncols());
    if k == 0 || k > min_dim {
        return Err(Error::InvalidArgument(format!(
            "rank {k} out of range 1..={min_dim}"
        )));
    }
    let factors = full_svd(a)?;
    let mut out = Matrix::zeros(a.nrows(), a.ncols());
    for j in 0..k {
        out.ger(
            factors.singular_values[j],
            &factors.u.column(j),
            &factors.v.column(j),
            1.0,
        );
    }
    Ok(out)
}

/// Default cap for the eigenvalue-ratio search, `min(20, floor(min(n, t) / 2))`.
pub fn default_k_max(n: usize, t: usize) -> usize {
    (n.min(t) / 2).clamp(1, 20)
}

/// Eigenvalue-ratio rank estimator on a descending spectrum.
///
/// Returns `argmax_{1<=k<=k_max} s_k^2 / s_{k+1}^2`, ties broken toward the
/// smaller `k`; a floor of 1e-12 is added to denominators.
pub fn eigenvalue_ratio_rank(singular_values: &[f64], k_max: usize) -> Result<usize> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be >= 1".to_string()));
    }
    if singular_values.len() < k_max + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least k_max + 1 = {} singular values, got {}",
            k_max + 1,
            singular_values.len()
        )));
    }
    if singular_values.iter().all(|&s| s == 0.0) {
        return Err(Error::Degenerate("degenerate spectrum".to_string()));
    }
    const FLOOR: f64 = 1e-12;
    let mut best_k = 1;
    let mut best_ratio = f64::NEG_INFINITY;
    for k in 1..=k_max {
        let num = singular_values[k - 1].powi(2);
        let den = singular_values[k].powi(2) + FLOOR;
        let ratio = num / den;
        if ratio > best_ratio {
            best_ratio = ratio;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// Procrustes-aligned subspace distance between two orthonormal bases:
/// `min over orthogonal R of ||U_hat - U R||_F`, computed from the SVD of
/// `U^T U_hat` as `sqrt(2K - 2 sum_k s_k)`.
pub fn procrustes_distance(u_hat: &Matrix, u: &Matrix) -> Result<f64> {
    if u_hat.shape() != u.shape() {
        return Err(Error::Dimension(format!(
            "shape mismatch: {:?} vs {:?}",
            u_hat.shape(),
            u.shape()
        )));
    }
    ensure_finite(u_hat, "subspace basis")?;
    ensure_finite(u, "subspace basis")?;
    let k = u.ncols();
    let cross = u.transpose() * u_hat;
    let svd = nalgebra::SVD::try_new(cross, false, false, f64::EPSILON, 0)
        .ok_or(Error::SvdFailure)?;
    let trace: f64 = svd.singular_values.iter().sum();
    Ok((2.0 * k as f64 - 2.0 * trace).max(0.0).sqrt())
}
