use thiserror::Error;

/// Errors produced by oracles, solvers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("oracle produced a non-finite value in {0}")]
    Oracle(&'static str),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("iterate diverged: {0}")]
    Divergence(String),

    #[error("iteration bound exceeded: {0}")]
    BoundExceeded(String),

    /// The objective increased although every step provably decreases it,
    /// so the declared smoothness constants cannot be valid.
    #[error("objective increased by {increase:e} at iteration {iter}; declared smoothness constants are invalid")]
    Constants { iter: usize, increase: f64 },

    #[error("dense certification unavailable for d = {dim} (cap {cap})")]
    CertificationUnavailable { dim: usize, cap: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
