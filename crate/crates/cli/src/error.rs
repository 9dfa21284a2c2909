use std::fmt;
use std::path::Path;

/// Failure of a command, carrying the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub const VALIDATION: i32 = 1;
    pub const NUMERICAL: i32 = 2;
    pub const STABILITY: i32 = 3;

    pub fn validation(message: impl Into<String>) -> Self {
        Self { code: Self::VALIDATION, message: message.into() }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::validation(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<memlqr::Error> for CliError {
    fn from(e: memlqr::Error) -> Self {
        use memlqr::Error::*;
        let code = match &e {
            Shape(_) | Bounds { .. } | Argument(_) | Initialization { .. } => Self::VALIDATION,
            StabilityViolation { .. } => Self::STABILITY,
            Unstable { .. }
            | Numerical { .. }
            | NotStabilizable { .. }
            | ProxStall { .. }
            | UnstableClient { .. }
            | Stall { .. }
            | TooManyRejections { .. } => Self::NUMERICAL,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::validation(e.to_string())
    }
}
