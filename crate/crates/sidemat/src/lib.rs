//! Matrix estimation with row/column side information.
//!
//! The target matrix is modeled as a sum of four components: an interaction
//! term explained by both row covariates `X` and column covariates `Z`, a
//! row-only term, a column-only term, and a residual low-rank term explained
//! by neither. Estimation combines sieve projection (polynomial series bases
//! for `X` and `Z`) with closed-form nuclear-norm penalization of the three
//! projected residual blocks.
//!
//! Three observation regimes are supported:
//! - fully observed panels ([`estimate::estimate_full`]),
//! - entries missing at random ([`estimate::estimate_mar`]),
//! - a fixed missing block as in causal panel data ([`estimate::estimate_mnar`]).
//!
//! The [`simgen`] and [`harness`] modules provide the simulation designs and
//! the Monte-Carlo experiment runner used to compare the estimator against
//! the baseline methods in [`baselines`].

pub mod baselines;
mod error;
pub mod estimate;
pub mod harness;
pub mod lowrank;
pub mod mask;
pub mod noise;
pub mod sieve;
pub mod simgen;

pub use error::{Error, Result};

/// Dense real matrix used throughout: outcomes, components, estimates.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Dense real vector.
pub type Vector = nalgebra::DVector<f64>;

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
