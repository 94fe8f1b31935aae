use thiserror::Error;

/// Errors produced by the estimators and their building blocks.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An argument is outside its admissible range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input contains NaN or infinite entries.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// The input is degenerate for the requested operation
    /// (e.g. an all-zero spectrum or an empty mask).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A least-squares regressor is numerically rank deficient.
    #[error("rank-deficient regressor: {detail} (condition number {condition:.3e})")]
    RankDeficient { detail: String, condition: f64 },

    /// The requested rank exceeds what the data supports.
    #[error("rank {requested} not achievable: {detail} (achievable rank {achievable})")]
    RankUnachievable {
        requested: usize,
        achievable: usize,
        detail: String,
    },

    /// The singular value decomposition did not converge.
    #[error("singular value decomposition failed to converge")]
    SvdFailure,
}

pub type Result<T> = std::result::Result<T, Error>;
