//! Estimation under a fixed missing block.
//!
//! The fully observed procedure runs on the tall submatrix (all rows, the
//! observed columns) and on the wide submatrix (the observed rows, all
//! columns). The tall estimate supplies left singular vectors for every row;
//! the wide estimate supplies singular values and right singular vectors for
//! every column. A least-squares rotation aligns the two bases on the shared
//! observed rows, and the aligned factors reassemble the full matrix,
//! including the never-observed block.

use crate::estimate::full::{estimate_full_projected, ComponentEstimate, PenaltySpec};
use crate::lowrank::{default_k_max, eigenvalue_ratio_rank, full_svd, SvdFactors};
use crate::mask::BlockShape;
use crate::sieve::{build_design, projector, SieveSpec};
use crate::{Error, Matrix, Result};

/// How many singular vectors to carry through the recombination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankChoice {
    Fixed(usize),
    /// Count the singular values of the wide estimate that rise above the
    /// noise operator-norm level `sigma (sqrt(N0) + sqrt(T))`. Directions
    /// below that level are not transferable across blocks: their subspace
    /// estimates are noise, and the alignment regression amplifies them.
    Auto,
    /// Eigenvalue-ratio estimator on the wide estimate's spectrum.
    EigenvalueRatio,
}

/// Incoherence warning floor: the smallest eigenvalue of the rescaled
/// observed-row (or observed-column) Gram of the singular vectors should stay
/// above this.
pub const INCOHERENCE_FLOOR: f64 = 0.1;

/// Diagnostics reported alongside the block-missing estimate.
#[derive(Debug, Clone)]
pub struct MnarDiagnostics {
    pub rank_used: usize,
    pub sigma_tall: f64,
    pub sigma_wide: f64,
    /// Extreme eigenvalues of `(N/N0) U_sub^T U_sub` for the tall left
    /// singular vectors restricted to observed rows.
    pub row_incoherence: (f64, f64),
    /// Extreme eigenvalues of `(T/T0) V_sub^T V_sub` for the wide right
    /// singular vectors restricted to observed columns.
    pub col_incoherence: (f64, f64),
    /// True when either incoherence minimum fell below [`INCOHERENCE_FLOOR`].
    pub incoherence_warning: bool,
}

/// Output of [`estimate_mnar`].
#[derive(Debug, Clone)]
pub struct MnarEstimate {
    pub m_hat: Matrix,
    pub diagnostics: MnarDiagnostics,
}

/// Least-squares alignment of the wide basis onto the tall basis restricted
/// to the shared rows: solves `U_tall_sub H ~= U_wide`.
pub fn rotation_adjust(u_tall_sub: &Matrix, u_wide: &Matrix) -> Result<Matrix> {
    if u_tall_sub.nrows() != u_wide.nrows() || u_tall_sub.ncols() != u_wide.ncols() {
        return Err(Error::Dimension(format!(
            "alignment inputs must share shape, got {:?} and {:?}",
            u_tall_sub.shape(),
            u_wide.shape()
        )));
    }
    let k = u_tall_sub.ncols();
    if u_tall_sub.nrows() < k {
        return Err(Error::Dimension(format!(
            "need at least K = {k} shared rows, got {}",
            u_tall_sub.nrows()
        )));
    }
    let svd = nalgebra::SVD::try_new(u_tall_sub.clone(), true, true, f64::EPSILON, 0)
        .ok_or(Error::SvdFailure)?;
    let s = &svd.singular_values;
    let smax = s[0];
    let smin = s[s.len() - 1];
    let tol = u_tall_sub.nrows().max(k) as f64 * f64::EPSILON * smax;
    if smin <= tol {
        return Err(Error::RankDeficient {
            detail: "tall singular vectors restricted to observed rows".to_string(),
            condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        });
    }
    svd.solve(u_wide, tol).map_err(|e| Error::Dimension(e.to_string()))
}

/// Signal rank of a wide-estimate spectrum: singular values above
/// `sigma (sqrt(n0) + sqrt(t))`, with an epsilon floor so that a noiseless
/// spectrum reports its numerical rank.
pub fn mnar_rank_from_spectrum(
    singular_values: &[f64],
    sigma: f64,
    n0: usize,
    t: usize,
) -> usize {
    let noise_level = sigma * ((n0 as f64).sqrt() + (t as f64).sqrt());
    let threshold = noise_level.max(pipeline_rank_tol(singular_values, n0, t));
    singular_values.iter().filter(|&&s| s > threshold).count()
}

// The submatrix estimates carry soft-threshold residue of order
// `8 max(dims) eps ||Y||_F` from the numeric penalty floor; rank detection on
// them must sit above that, not at the one-operation machine tolerance.
fn pipeline_rank_tol(singular_values: &[f64], n: usize, t: usize) -> f64 {
    let s1 = singular_values.first().copied().unwrap_or(0.0);
    64.0 * n.max(t) as f64 * f64::EPSILON * s1
}

fn pipeline_rank(singular_values: &[f64], n: usize, t: usize) -> usize {
    let tol = pipeline_rank_tol(singular_values, n, t);
    singular_values.iter().filter(|&&s| s > tol).count()
}

/// Run the block-missing procedure. Entries of `y` inside the missing block
/// are never read; only the tall and wide submatrices are extracted.
#[allow(clippy::too_many_arguments)]
pub fn estimate_mnar(
    y: &Matrix,
    shape: &BlockShape,
    x: &Matrix,
    z: &Matrix,
    spec_x: &SieveSpec,
    spec_z: &SieveSpec,
    rank: RankChoice,
    penalties: &PenaltySpec,
) -> Result<MnarEstimate> {
    if y.nrows() != shape.n || y.ncols() != shape.t {
        return Err(Error::Dimension(format!(
            "panel is {}x{} but the block shape says {}x{}",
            y.nrows(),
            y.ncols(),
            shape.n,
            shape.t
        )));
    }
    if x.nrows() != shape.n || z.nrows() != shape.t {
        return Err(Error::Dimension(
            "covariate rows must match the panel dimensions".to_string(),
        ));
    }
    if let RankChoice::Fixed(k) = rank {
        if k == 0 || k > shape.n0.min(shape.t0) {
            return Err(Error::InvalidArgument(format!(
                "rank {k} outside 1..=min(N0, T0) = {}",
                shape.n0.min(shape.t0)
            )));
        }
    }

    let y_tall = y.view((0, 0), (shape.n, shape.t0)).into_owned();
    let y_wide = y.view((0, 0), (shape.n0, shape.t)).into_owned();
    let z_sub = z.rows(0, shape.t0).into_owned();
    let x_sub = x.rows(0, shape.n0).into_owned();

    // the two sub-estimations are independent; run them side by side
    let (tall, wide) = rayon::join(
        || submatrix_estimate(&y_tall, x, &z_sub, spec_x, spec_z, penalties),
        || submatrix_estimate(&y_wide, &x_sub, z, spec_x, spec_z, penalties),
    );
    let (tall, wide) = (tall?, wide?);

    let factors_tall = full_svd(&tall.m_hat)?;
    let factors_wide = full_svd(&wide.m_hat)?;
    let rank_tall = pipeline_rank(factors_tall.singular_values.as_slice(), shape.n, shape.t0);
    let rank_wide = pipeline_rank(factors_wide.singular_values.as_slice(), shape.n0, shape.t);

    if rank_wide == 0 || rank_tall == 0 {
        // nothing survived the thresholds; the estimate is identically zero
        return Ok(MnarEstimate {
            m_hat: Matrix::zeros(shape.n, shape.t),
            diagnostics: MnarDiagnostics {
                rank_used: 0,
                sigma_tall: tall.sigma_hat,
                sigma_wide: wide.sigma_hat,
                row_incoherence: (0.0, 0.0),
                col_incoherence: (0.0, 0.0),
                incoherence_warning: true,
            },
        });
    }

    let achievable = rank_tall.min(rank_wide);
    let k = match rank {
        RankChoice::Fixed(k) => {
            if k > achievable {
                return Err(Error::RankUnachievable {
                    requested: k,
                    achievable,
                    detail: "post-threshold submatrix estimates".to_string(),
                });
            }
            k
        }
        RankChoice::Auto => {
            let sigma = wide.sigma_hat;
            let k = mnar_rank_from_spectrum(
                factors_wide.singular_values.as_slice(),
                sigma,
                shape.n0,
                shape.t,
            );
            k.clamp(1, achievable)
        }
        RankChoice::EigenvalueRatio => {
            let k_max = default_k_max(shape.n0, shape.t);
            let k = eigenvalue_ratio_rank(factors_wide.singular_values.as_slice(), k_max)?;
            if k > achievable {
                return Err(Error::RankUnachievable {
                    requested: k,
                    achievable,
                    detail: "eigenvalue-ratio pick exceeds post-threshold rank".to_string(),
                });
            }
            k
        }
    };

    let m_hat = recombine(&factors_tall, &factors_wide, shape.n0, k)?;

    let u_sub = factors_tall.u.view((0, 0), (shape.n0, k)).into_owned();
    let row_incoherence = gram_extremes(&u_sub, shape.n as f64 / shape.n0 as f64);
    let v_sub = factors_wide.v.view((0, 0), (shape.t0, k)).into_owned();
    let col_incoherence = gram_extremes(&v_sub, shape.t as f64 / shape.t0 as f64);
    let incoherence_warning =
        row_incoherence.0 < INCOHERENCE_FLOOR || col_incoherence.0 < INCOHERENCE_FLOOR;

    Ok(MnarEstimate {
        m_hat,
        diagnostics: MnarDiagnostics {
            rank_used: k,
            sigma_tall: tall.sigma_hat,
            sigma_wide: wide.sigma_hat,
            row_incoherence,
            col_incoherence,
            incoherence_warning,
        },
    })
}

fn submatrix_estimate(
    y: &Matrix,
    x: &Matrix,
    z: &Matrix,
    spec_x: &SieveSpec,
    spec_z: &SieveSpec,
    penalties: &PenaltySpec,
) -> Result<ComponentEstimate> {
    let px = projector(&build_design(x, spec_x)?)?;
    let pz = projector(&build_design(z, spec_z)?)?;
    estimate_full_projected(y, &px, &pz, penalties)
}

/// Reassemble the full matrix from tall left factors and wide factors:
/// `U_tall H_adj D_wide V_wide^T` with `H_adj` from [`rotation_adjust`].
pub(crate) fn recombine(
    factors_tall: &SvdFactors,
    factors_wide: &SvdFactors,
    n0: usize,
    k: usize,
) -> Result<Matrix> {
    if k == 0 {
        return Err(Error::InvalidArgument("rank must be >= 1".to_string()));
    }
    if k > factors_tall.u.ncols() || k > factors_wide.u.ncols() {
        return Err(Error::RankUnachievable {
            requested: k,
            achievable: factors_tall.u.ncols().min(factors_wide.u.ncols()),
            detail: "available singular vectors".to_string(),
        });
    }
    let u_tall = factors_tall.top_left(k);
    let u_tall_sub = u_tall.rows(0, n0).into_owned();
    let u_wide = factors_wide.top_left(k);
    let h_adj = rotation_adjust(&u_tall_sub, &u_wide)?;
    let mut hd = h_adj;
    for j in 0..k {
        let s = factors_wide.singular_values[j];
        for i in 0..k {
            hd[(i, j)] *= s;
        }
    }
    Ok(u_tall * hd * factors_wide.top_right(k).transpose())
}

fn gram_extremes(u_sub: &Matrix, scale: f64) -> (f64, f64) {
    let gram = u_sub.transpose() * u_sub * scale;
    let eigs = gram.symmetric_eigen().eigenvalues;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &e in eigs.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{self, streams};
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    fn random_orthonormal(n: usize, k: usize, seed: u64) -> Matrix {
        let mut rng = simgen::stream_rng(seed, streams::FACTORS);
        let std_normal = Normal::new(0.0, 1.0).unwrap();
        let a = Matrix::from_fn(n, k, |_, _| std_normal.sample(&mut rng));
        a.qr().q().columns(0, k).into_owned()
    }

    #[test]
    fn rotation_adjust_identity_and_rotation() {
        let u = random_orthonormal(12, 3, 1);
        let h = rotation_adjust(&u, &u).unwrap();
        assert_abs_diff_eq!(h, Matrix::identity(3, 3), epsilon = 1e-10);

        let q = random_orthonormal(3, 3, 2);
        let h2 = rotation_adjust(&u, &(&u * &q)).unwrap();
        assert_abs_diff_eq!(h2, q, epsilon = 1e-8);
    }

    #[test]
    fn rotation_adjust_matches_normal_equations() {
        let mut rng = simgen::stream_rng(3, streams::NOISE);
        let std_normal = Normal::new(0.0, 1.0).unwrap();
        let a = Matrix::from_fn(15, 3, |_, _| std_normal.sample(&mut rng));
        let b = Matrix::from_fn(15, 3, |_, _| std_normal.sample(&mut rng));
        let h = rotation_adjust(&a, &b).unwrap();
        let gram = a.transpose() * &a;
        let oracle = gram.try_inverse().unwrap() * a.transpose() * &b;
        assert_abs_diff_eq!(h, oracle, epsilon = 1e-8);
    }

    #[test]
    fn rotation_adjust_rejects_rank_deficient() {
        let mut a = Matrix::zeros(8, 2);
        for i in 0..8 {
            a[(i, 0)] = i as f64;
            a[(i, 1)] = 2.0 * i as f64;
        }
        let b = Matrix::zeros(8, 2);
        match rotation_adjust(&a, &b) {
            Err(Error::RankDeficient { condition, .. }) => {
                assert!(condition > 1e10);
            }
            other => panic!("expected rank-deficiency error, got {other:?}"),
        }
    }

    /// Noiseless low-rank panel with factors independent of the covariates.
    fn noiseless_low_rank(n: usize, t: usize, k: usize, seed: u64) -> (Matrix, Matrix, Matrix) {
        let mut rng = simgen::stream_rng(seed, streams::FACTORS);
        let std_normal = Normal::new(0.0, 1.0).unwrap();
        let u = Matrix::from_fn(n, k, |_, _| std_normal.sample(&mut rng));
        let v = Matrix::from_fn(t, k, |_, _| std_normal.sample(&mut rng));
        let m = crate::simgen::normalize_component(&(&u * v.transpose()), n, t, 2.0).unwrap();
        let mut cov_rng = simgen::stream_rng(seed, streams::COVARIATES);
        let (x, z) = simgen::gen_characteristics(n, t, &mut cov_rng);
        (m, x, z)
    }

    #[test]
    fn exact_recovery_of_noiseless_rank_two_panel() {
        let (m, x, z) = noiseless_low_rank(80, 80, 2, 5);
        let shape = BlockShape::new(80, 80, 40, 40).unwrap();
        let spec = SieveSpec::polynomial(5);
        for rank in [RankChoice::Fixed(2), RankChoice::Auto] {
            let est = estimate_mnar(&m, &shape, &x, &z, &spec, &spec, rank, &PenaltySpec::default())
                .unwrap();
            assert_eq!(est.diagnostics.rank_used, 2);
            let mut err2 = 0.0;
            let mut norm2 = 0.0;
            for i in 40..80 {
                for j in 40..80 {
                    err2 += (est.m_hat[(i, j)] - m[(i, j)]).powi(2);
                    norm2 += m[(i, j)].powi(2);
                }
            }
            let rel = (err2 / norm2).sqrt();
            assert!(rel <= 1e-6, "missing-block relative error {rel}");
            assert!(!est.diagnostics.incoherence_warning);
        }
    }

    #[test]
    fn zero_panel_estimates_zero() {
        let mut rng = simgen::stream_rng(6, streams::COVARIATES);
        let (x, z) = simgen::gen_characteristics(40, 40, &mut rng);
        let shape = BlockShape::new(40, 40, 20, 20).unwrap();
        let spec = SieveSpec::polynomial(2);
        let est = estimate_mnar(
            &Matrix::zeros(40, 40),
            &shape,
            &x,
            &z,
            &spec,
            &spec,
            RankChoice::Auto,
            &PenaltySpec::default(),
        )
        .unwrap();
        assert!(est.m_hat.iter().all(|&v| v == 0.0));
        assert_eq!(est.diagnostics.rank_used, 0);
    }

    #[test]
    fn missing_block_is_never_read() {
        let (m, x, z) = noiseless_low_rank(40, 40, 2, 7);
        let shape = BlockShape::new(40, 40, 20, 20).unwrap();
        let spec = SieveSpec::polynomial(3);
        let base = estimate_mnar(
            &m, &shape, &x, &z, &spec, &spec, RankChoice::Fixed(2), &PenaltySpec::default(),
        )
        .unwrap();
        let mut poisoned = m.clone();
        for i in 20..40 {
            for j in 20..40 {
                poisoned[(i, j)] = f64::NAN;
            }
        }
        let alt = estimate_mnar(
            &poisoned, &shape, &x, &z, &spec, &spec, RankChoice::Fixed(2), &PenaltySpec::default(),
        )
        .unwrap();
        assert_eq!(base.m_hat, alt.m_hat);
    }

    #[test]
    fn requesting_more_rank_than_achievable_fails() {
        let (m, x, z) = noiseless_low_rank(40, 40, 2, 8);
        let shape = BlockShape::new(40, 40, 20, 20).unwrap();
        let spec = SieveSpec::polynomial(2);
        match estimate_mnar(
            &m, &shape, &x, &z, &spec, &spec, RankChoice::Fixed(5), &PenaltySpec::default(),
        ) {
            Err(Error::RankUnachievable { achievable, .. }) => assert_eq!(achievable, 2),
            other => panic!("expected rank error, got {other:?}"),
        }
        // rank above min(N0, T0) is rejected up front
        assert!(matches!(
            estimate_mnar(
                &m, &shape, &x, &z, &spec, &spec, RankChoice::Fixed(21), &PenaltySpec::default(),
            ),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn recombination_is_invariant_to_basis_rotation() {
        let (m, x, z) = noiseless_low_rank(60, 60, 3, 9);
        let shape = BlockShape::new(60, 60, 30, 30).unwrap();
        let spec = SieveSpec::polynomial(2);
        let est = estimate_mnar(
            &m, &shape, &x, &z, &spec, &spec, RankChoice::Fixed(3), &PenaltySpec::default(),
        )
        .unwrap();

        // rotate the tall factors by an arbitrary orthogonal Q upstream of the
        // alignment; the regression absorbs it
        let y_tall = m.view((0, 0), (60, 30)).into_owned();
        let y_wide = m.view((0, 0), (30, 60)).into_owned();
        let factors_tall = full_svd(&y_tall).unwrap();
        let factors_wide = full_svd(&y_wide).unwrap();
        let direct = recombine(&factors_tall, &factors_wide, 30, 3).unwrap();
        let q = random_orthonormal(3, 3, 10);
        let rotated = SvdFactors {
            u: factors_tall.top_left(3) * &q,
            singular_values: factors_tall.singular_values.rows(0, 3).into_owned(),
            v: factors_tall.top_right(3) * &q,
        };
        let re = recombine(&rotated, &factors_wide, 30, 3).unwrap();
        let rel = (&re - &direct).norm() / direct.norm();
        assert!(rel <= 1e-8, "rotation leaked into the estimate: {rel}");
        // and both agree with the estimator's output on the noiseless panel
        let rel2 = (&direct - &est.m_hat).norm() / est.m_hat.norm();
        assert!(rel2 <= 1e-6);
    }

    #[test]
    fn observed_rows_match_wide_estimate_in_noiseless_case() {
        let (m, x, z) = noiseless_low_rank(50, 50, 2, 11);
        let shape = BlockShape::new(50, 50, 25, 25).unwrap();
        let spec = SieveSpec::polynomial(2);
        let est = estimate_mnar(
            &m, &shape, &x, &z, &spec, &spec, RankChoice::Fixed(2), &PenaltySpec::default(),
        )
        .unwrap();
        let top = est.m_hat.view((0, 0), (25, 50)).into_owned();
        let wide_truth = m.view((0, 0), (25, 50)).into_owned();
        let rel = (&top - &wide_truth).norm() / wide_truth.norm();
        assert!(rel <= 1e-6, "observed-row inconsistency {rel}");
    }
}
