use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("inverse tension failed to converge for s = {0}")]
    InverseNotConverged(f64),

    #[error("viscous solver became unstable at t = {time}: {detail}")]
    Unstable { time: f64, detail: String },

    #[error("Neumann series not converged after {depth} terms (last relative increment {last_increment:e})")]
    SeriesNotConverged { depth: usize, last_increment: f64 },

    #[error("inadmissible test function `{0}`")]
    InadmissibleTestFunction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
