use gpcnoise::GpcError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Args(String),
    #[error(transparent)]
    Core(#[from] GpcError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Args(_) => "invalid-args",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "io-error",
            CliError::Json(_) => "json-error",
        }
    }

    /// One machine-parseable line: `error[kind]: message`.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error[{}]: {msg}", self.kind())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
