use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("conserved-quantity drift {drift:.3e} exceeds bound with {steps} steps")]
    Drift { drift: f64, steps: usize },
    #[error("indeterminate sensitivity: {0}")]
    Indeterminate(String),
    #[error("Fock cutoff overflow: tail probability {tail:.3e}")]
    CutoffOverflow { tail: f64 },
    #[error("depleted regime: {0}")]
    Depleted(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Validation(_) | Error::Json(_) => 2,
            Error::Io(_) | Error::Csv(_) => 1,
            Error::Drift { .. }
            | Error::Indeterminate(_)
            | Error::CutoffOverflow { .. }
            | Error::Depleted(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
