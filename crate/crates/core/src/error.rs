use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("process is not stable: max eigenvalue modulus {max_modulus:.6} >= {limit:.6}")]
    NonStationary { max_modulus: f64, limit: f64 },

    #[error("eigenvalue solver did not converge")]
    EigenFailure,

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("Lyapunov solve failed: {0}")]
    LyapunovFailure(String),

    #[error("path too short: need at least {needed} observations, got {got}")]
    PathTooShort { needed: usize, got: usize },

    #[error("rejection sampling found no stable draw in {tries} tries")]
    RejectionExhausted { tries: usize },

    #[error("invalid block scheme: {0}")]
    InvalidBlockScheme(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EigenFailure
                | Error::DegenerateSpectrum(_)
                | Error::LyapunovFailure(_)
                | Error::RejectionExhausted { .. }
        )
    }
}
