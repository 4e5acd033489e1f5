use thiserror::Error;

/// Errors produced anywhere in the herdlab pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input file. `location` names the row and
    /// column (or ticker) at fault.
    #[error("{path}: {location}: {message}")]
    Load {
        path: String,
        location: String,
        message: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("stock {ticker} has zero variance")]
    ZeroVariance { ticker: String },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn load(
        path: impl Into<String>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Load {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }
}
