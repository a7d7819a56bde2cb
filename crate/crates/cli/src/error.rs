use std::fmt;
use std::process::ExitCode;

/// Failure classes that map onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys, or config values. Exit code 1.
    Usage(String),
    /// Unreadable or invalid input data, or a failed check. Exit code 2.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Usage(_) => ExitCode::from(1),
            Self::Data(_) => ExitCode::from(2),
        }
    }

    pub fn data(e: impl fmt::Display) -> Self {
        Self::Data(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Data(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Data(format!("{e:#}"))
    }
}
