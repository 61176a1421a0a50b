use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("input {index} has norm {norm:.6} above the bound {bound}")]
    NormBound { index: usize, norm: f64, bound: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("all {candidates} candidates failed:\n{diagnostics}")]
    ExhaustiveFailure {
        candidates: usize,
        diagnostics: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by the numerics rather than by the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning(_) | Error::Simulation(_) | Error::NormBound { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
