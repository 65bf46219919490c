use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum GpcError {
    #[error("factorization failed: matrix not positive definite after {attempts} jitter attempts (last jitter {last_jitter:e})")]
    Factorization { attempts: usize, last_jitter: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite ELBO at iteration {iteration}: {term}")]
    NonFinite { iteration: usize, term: String },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("inconsistent width at row {row}: expected {expected} fields, found {found}")]
    InconsistentWidth {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("degenerate draw: {0}")]
    DegenerateDraw(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl GpcError {
    /// Short stable identifier, used for one-line machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            GpcError::Factorization { .. } => "factorization-failure",
            GpcError::DimensionMismatch(_) => "dimension-mismatch",
            GpcError::InvalidArgument(_) => "invalid-argument",
            GpcError::NonFinite { .. } => "non-finite-elbo",
            GpcError::Parse { .. } => "parse-error",
            GpcError::InconsistentWidth { .. } => "inconsistent-width",
            GpcError::DegenerateDraw(_) => "degenerate-draw",
            GpcError::Io(_) => "io-error",
            GpcError::Json(_) => "json-error",
            GpcError::Csv(_) => "csv-error",
        }
    }
}

pub type Result<T> = std::result::Result<T, GpcError>;
