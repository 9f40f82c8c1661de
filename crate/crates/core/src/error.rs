use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("clifford index {0} out of range 0..24")]
    GateIndex(usize),

    #[error("pulse area {0} rad outside the BB1 range (0, 4π]")]
    Bb1Area(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular normal matrix")]
    Singular,

    #[error("fit did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidParameter(_) | Error::GateIndex(_) | Error::Bb1Area(_) | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
