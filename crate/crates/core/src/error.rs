use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation (non-finite input,
    /// non-positive inertia, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration that violates a type invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Static-boundary search ran out of range while the margin was still shrinking.
    #[error("boundary search exhausted the range |tau_e| <= {limit} N·m without settling (tau_m = {tau_m})")]
    RangeExhausted { tau_m: f64, limit: f64 },

    /// A malformed or inconsistent data file.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {value}")))
    }
}
