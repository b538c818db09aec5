use std::path::{Path, PathBuf};

use fgp_core::FgpError;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// Malformed input file. `line` is 1-based and counts the schema line.
    #[error("{path}:{}: {message}", line.map_or_else(|| "?".to_string(), |l| l.to_string()))]
    Parse {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] FgpError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: Option<u64>, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config(_) => "config",
            CliError::Core(FgpError::InvalidInput(_)) => "invalid_input",
            CliError::Core(FgpError::InvalidSpec(_)) => "invalid_spec",
            CliError::Core(FgpError::NumericalFailure { .. }) => "numerical_failure",
            CliError::Core(FgpError::InitializationFailure { .. }) => "initialization_failure",
        }
    }

    /// The machine-readable form printed on stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: &'a str,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            path: Option<&'a Path>,
            #[serde(skip_serializing_if = "Option::is_none")]
            line: Option<u64>,
        }
        let (path, line) = match self {
            CliError::Io { path, .. } => (Some(path.as_path()), None),
            CliError::Parse { path, line, .. } => (Some(path.as_path()), *line),
            _ => (None, None),
        };
        let r = Report {
            error: self.kind(),
            message: self.to_string(),
            path,
            line,
        };
        serde_json::to_string(&r).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.kind()))
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
