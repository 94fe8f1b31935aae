//! The three estimation procedures: fully observed panels, entries missing
//! at random, and block-missing panels.

mod full;
mod mar;
mod mnar;

pub use full::{
    estimate_full, estimate_full_projected, estimate_sigma, ComponentEstimate, PenaltyPlan,
    PenaltyScale, PenaltySource, PenaltySpec,
};
pub use mar::{
    estimate_mar, estimate_p, sigma_mad_observed, solve_completion, CompletionResult, MMaxChoice,
    MarConfig, MarEstimate, ProbabilityChoice,
};
pub use mnar::{
    estimate_mnar, mnar_rank_from_spectrum, rotation_adjust, MnarDiagnostics, MnarEstimate,
    RankChoice, INCOHERENCE_FLOOR,
};
pub(crate) use mnar::recombine as mnar_recombine;
