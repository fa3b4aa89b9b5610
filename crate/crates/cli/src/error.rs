//! Error type of the command-line tool and its exit codes.

use serde::Serialize;
use thiserror::Error;

/// Exit code for bad input: arguments, config, data files.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for failures of the numerical machinery.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Numerical(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    /// Attach the name of the pipeline stage that raised the error.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            CliError::Stage { .. } => self,
            other => CliError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Stage { source, .. } => source.exit_code(),
            CliError::Validation(_) | CliError::Io { .. } => EXIT_VALIDATION,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::Io { .. } => "io",
            CliError::Stage { source, .. } => source.kind(),
        }
    }

    /// Machine-readable description written to stderr on failure.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            stage: Option<&'a str>,
            message: String,
            exit_code: i32,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        let stage = match self {
            CliError::Stage { stage, .. } => Some(*stage),
            _ => None,
        };
        let message = match self {
            CliError::Stage { source, .. } => source.to_string(),
            other => other.to_string(),
        };
        serde_json::to_string(&Wrapper {
            error: Body {
                kind: self.kind(),
                stage,
                message,
                exit_code: self.exit_code(),
            },
        })
        .expect("error body serialises")
    }
}

impl From<mapprior::Error> for CliError {
    fn from(e: mapprior::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(format!("JSON: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
