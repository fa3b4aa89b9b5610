use thiserror::Error;

/// Errors raised across the library.
///
/// The variants split into two broad classes: input validation problems
/// (bad parameters, mismatched families, values outside a support) and
/// numerical failures (non-convergence, divergent integrals). Callers such
/// as the CLI map these classes onto distinct exit codes via
/// [`Error::is_numerical`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("family mismatch: {0}")]
    FamilyMismatch(String),

    #[error("value {value} outside support {support}")]
    OutOfSupport { value: f64, support: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Divergent(_) | Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
