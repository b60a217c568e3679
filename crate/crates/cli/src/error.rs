use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] koopq_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit status: 2 for usage and configuration problems, 1 for
    /// everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::UnknownExperiment(_) | Self::Config(_) => 2,
            _ => 1,
        }
    }

    /// Short machine-readable category used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::UnknownExperiment(_) => "unknown-experiment",
            Self::Config(_) => "config",
            Self::Schema(_) => "schema",
            Self::Core(_) => "numerical",
            Self::Io(_) => "io",
            Self::Json(_) => "json",
            Self::Csv(_) => "csv",
        }
    }

    /// `{"error": kind, "message": text}` for stderr.
    pub fn report(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() })
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
