use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid probability data: {0}")]
    InvalidProbability(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("linear program infeasible: {0}")]
    Infeasible(String),
    #[error("linear program unbounded: {0}")]
    Unbounded(String),
}

impl Error {
    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence(_) | Error::Singular(_) | Error::Infeasible(_) | Error::Unbounded(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
