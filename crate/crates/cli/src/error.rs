use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration text; `line` is 1-based.
    #[error("line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] dlpr::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        CliError::Config { line, msg: msg.into() }
    }

    /// Process exit code: 2 for usage and configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
