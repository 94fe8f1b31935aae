//! Estimation for fully observed panels.
//!
//! Step 1 takes the double projection `P_X Y P_Z` as the interaction
//! component. Step 2 soft-thresholds the three complementary projected
//! blocks: `P_X Y (I - P_Z)`, `(I - P_X) Y P_Z`, and `(I - P_X) Y (I - P_Z)`,
//! with penalties proportional to the expected operator norm of the noise in
//! each block. Step 3 sums the four pieces.

use crate::lowrank::{full_svd, svt_from_factors, svt_ranked};
use crate::noise::{sigma_rms, sigma_spectral_median};
use crate::sieve::{build_design, projector, Projector, SieveSpec};
use crate::{ensure_finite, Error, Matrix, Result};

/// Multipliers applied to the noise scale when resolving penalties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyScale {
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl Default for PenaltyScale {
    fn default() -> Self {
        Self {
            c2: 2.0,
            c3: 2.0,
            c4: 2.0,
        }
    }
}

impl PenaltyScale {
    pub fn uniform(c: f64) -> Self {
        Self { c2: c, c3: c, c4: c }
    }
}

/// How the caller wants penalties chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltySpec {
    /// Resolve from the estimated noise scale:
    /// `nu2 = c2 sigma (sqrt(T) + sqrt(q_x))`,
    /// `nu3 = c3 sigma (sqrt(N) + sqrt(q_z))`,
    /// `nu4 = c4 sigma (sqrt(N) + sqrt(T))`.
    Auto(PenaltyScale),
    /// Use the given penalties as-is.
    Fixed { nu2: f64, nu3: f64, nu4: f64 },
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec::Auto(PenaltyScale::default())
    }
}

impl PenaltySpec {
    pub fn zero() -> Self {
        PenaltySpec::Fixed {
            nu2: 0.0,
            nu3: 0.0,
            nu4: 0.0,
        }
    }
}

/// Where a resolved penalty plan came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltySource {
    Auto { scale: PenaltyScale, sigma_hat: f64 },
    Manual,
}

/// Fully resolved penalties for the three thresholded blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyPlan {
    pub nu2: f64,
    pub nu3: f64,
    pub nu4: f64,
    pub source: PenaltySource,
}

impl PenaltyPlan {
    fn validate(&self) -> Result<()> {
        for (name, nu) in [("nu2", self.nu2), ("nu3", self.nu3), ("nu4", self.nu4)] {
            if !nu.is_finite() || nu < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be a nonnegative real, got {nu}"
                )));
            }
        }
        Ok(())
    }
}

/// The four estimated components, their sum, the post-threshold ranks, and
/// the penalties that produced them.
#[derive(Debug, Clone)]
pub struct ComponentEstimate {
    pub m1_hat: Matrix,
    pub m2_hat: Matrix,
    pub m3_hat: Matrix,
    pub m4_hat: Matrix,
    pub m_hat: Matrix,
    /// Post-threshold ranks of the second, third, and fourth components.
    pub ranks: (usize, usize, usize),
    pub penalties: PenaltyPlan,
    /// Spectral-median noise scale read off the doubly-orthogonal residual
    /// block; robust to low-rank signal left in that block.
    pub sigma_hat: f64,
}

/// Root-mean-square noise scale from the doubly-orthogonal residual block:
/// `||(I - P_X) Y (I - P_Z)||_F / sqrt((N - r_X)(T - r_Z))`.
///
/// Exact for pure noise; over-estimates when a residual low-rank component is
/// present, which only inflates penalties. The automatic penalty plans use
/// the spectral-median estimate instead, which stays calibrated in that case.
pub fn estimate_sigma(y: &Matrix, px: &Projector, pz: &Projector) -> Result<f64> {
    check_projector_dims(y, px, pz)?;
    ensure_finite(y, "outcome matrix")?;
    let (n, t) = y.shape();
    if px.rank >= n || pz.rank >= t {
        return Err(Error::Degenerate(format!(
            "projector ranks ({}, {}) leave no residual cells in a {}x{} panel",
            px.rank, pz.rank, n, t
        )));
    }
    let resid = px.complement_apply(&(y - y * &pz.values));
    sigma_rms(&resid, n - px.rank, t - pz.rank)
}

/// Run the fully observed procedure, building designs and projectors from
/// raw covariates.
pub fn estimate_full(
    y: &Matrix,
    x: &Matrix,
    z: &Matrix,
    spec_x: &SieveSpec,
    spec_z: &SieveSpec,
    penalties: &PenaltySpec,
) -> Result<ComponentEstimate> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "X has {} rows but Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if z.nrows() != y.ncols() {
        return Err(Error::Dimension(format!(
            "Z has {} rows but Y has {} columns",
            z.nrows(),
            y.ncols()
        )));
    }
    let px = projector(&build_design(x, spec_x)?)?;
    let pz = projector(&build_design(z, spec_z)?)?;
    estimate_full_projected(y, &px, &pz, penalties)
}

/// Run the fully observed procedure with precomputed projectors.
pub fn estimate_full_projected(
    y: &Matrix,
    px: &Projector,
    pz: &Projector,
    penalties: &PenaltySpec,
) -> Result<ComponentEstimate> {
    check_projector_dims(y, px, pz)?;
    ensure_finite(y, "outcome matrix")?;
    let (n, t) = y.shape();
    if px.rank >= n || pz.rank >= t {
        return Err(Error::Degenerate(format!(
            "design too wide: projector ranks ({}, {}) in a {}x{} panel",
            px.rank, pz.rank, n, t
        )));
    }

    let ypz = y * &pz.values;
    let pxy = &px.values * y;
    let m1 = &pxy * &pz.values;
    let b2 = &pxy - &m1; // P_X Y (I - P_Z)
    let b3 = &ypz - &m1; // (I - P_X) Y P_Z
    let b4 = y - &pxy - &b3; // (I - P_X) Y (I - P_Z)

    let residual_factors = full_svd(&b4)?;
    let sigma_hat = sigma_spectral_median(
        residual_factors.singular_values.as_slice(),
        n - px.rank,
        t - pz.rank,
    )?;

    let plan = match *penalties {
        PenaltySpec::Auto(scale) => {
            let sqrt_n = (n as f64).sqrt();
            let sqrt_t = (t as f64).sqrt();
            // keeps cancellation residue out of the thresholded blocks when
            // the panel is noiseless and fully explained by the projections
            let numeric_floor = 8.0 * n.max(t) as f64 * f64::EPSILON * y.norm();
            PenaltyPlan {
                nu2: (scale.c2 * sigma_hat * (sqrt_t + (px.rank as f64).sqrt()))
                    .max(numeric_floor),
                nu3: (scale.c3 * sigma_hat * (sqrt_n + (pz.rank as f64).sqrt()))
                    .max(numeric_floor),
                nu4: (scale.c4 * sigma_hat * (sqrt_n + sqrt_t)).max(numeric_floor),
                source: PenaltySource::Auto { scale, sigma_hat },
            }
        }
        PenaltySpec::Fixed { nu2, nu3, nu4 } => PenaltyPlan {
            nu2,
            nu3,
            nu4,
            source: PenaltySource::Manual,
        },
    };
    plan.validate()?;

    let (m2, r2) = svt_ranked(&b2, plan.nu2 / 2.0)?;
    let (m3, r3) = svt_ranked(&b3, plan.nu3 / 2.0)?;
    let (m4, r4) = svt_from_factors(&residual_factors, plan.nu4 / 2.0, (n, t))?;
    let m_hat = &m1 + &m2 + &m3 + &m4;

    Ok(ComponentEstimate {
        m1_hat: m1,
        m2_hat: m2,
        m3_hat: m3,
        m4_hat: m4,
        m_hat,
        ranks: (r2, r3, r4),
        penalties: plan,
        sigma_hat,
    })
}

fn check_projector_dims(y: &Matrix, px: &Projector, pz: &Projector) -> Result<()> {
    if px.dim() != y.nrows() || pz.dim() != y.ncols() {
        return Err(Error::Dimension(format!(
            "projectors are {}x{} and {}x{} but Y is {}x{}",
            px.dim(),
            px.dim(),
            pz.dim(),
            pz.dim(),
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(())
}
