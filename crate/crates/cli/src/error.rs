use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}{}: {message}",
        line.map(|l| format!(" at line {l}")).unwrap_or_default(),
        field.as_ref().map(|f| format!(" (field `{f}`)")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: Option<String>,
        message: String,
    },

    #[error("missing artifacts in {dir}: {}", missing.join(", "))]
    MissingArtifacts { dir: String, missing: Vec<String> },

    #[error("artifact `{file}` is malformed: {message}")]
    Artifact { file: String, message: String },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Core(#[from] kancfd::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub(crate) fn config(line: Option<usize>, field: Option<&str>, message: impl Into<String>) -> Self {
        CliError::Config {
            line,
            field: field.map(str::to_owned),
            message: message.into(),
        }
    }

    pub(crate) fn artifact(file: &str, message: impl Into<String>) -> Self {
        CliError::Artifact {
            file: file.to_owned(),
            message: message.into(),
        }
    }

    /// Process exit code for this error: 2 for configuration problems, 3 for
    /// everything that goes wrong after a config was accepted.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            _ => 3,
        }
    }
}
