use serde::Serialize;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("{path}: {source}")]
    Study {
        path: String,
        #[source]
        source: tiltsens::Error,
    },

    #[error(transparent)]
    Core(#[from] tiltsens::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Study { .. } => "study",
            CliError::Core(_) => "analysis",
            CliError::Config(_) => "config",
            CliError::Json(_) => "json",
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
        }
    }

    /// Process exit status: 2 for usage problems, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: ErrorBody {
                kind: self.kind(),
                message: self.to_string(),
            },
        }
    }
}

/// Machine-readable error written to stderr before a nonzero exit.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: &'static str,
    pub message: String,
}
