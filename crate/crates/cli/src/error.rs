use std::fmt;
use std::process::ExitCode;

use blockopt_core::Error as CoreError;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    CertificateFailure = 1,
    InputError = 2,
    SolverFailure = 3,
}

impl Status {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn worst(self, other: Status) -> Status {
        if other.code() > self.code() {
            other
        } else {
            self
        }
    }
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s.code())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: `field` names the offending spec entry or flag.
    #[error("{field}: {reason}")]
    Input { field: String, reason: String },
    #[error("{0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn input(field: impl Into<String>, reason: impl fmt::Display) -> Self {
        CliError::Input {
            field: field.into(),
            reason: reason.to_string(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Core error raised while handling `context`; solver breakdowns map to
    /// exit 3, everything else is an input problem.
    pub fn core(context: &str, e: CoreError) -> Self {
        match e {
            CoreError::SolverFailure { .. } | CoreError::Diverged { .. } | CoreError::NonFinite(_) => {
                CliError::Solver(format!("{context}: {e}"))
            }
            CoreError::InvalidParameter { field, reason } => CliError::Input {
                field: if context.is_empty() {
                    field.to_string()
                } else {
                    format!("{context}.{field}")
                },
                reason,
            },
            other => CliError::input(context, other),
        }
    }

    pub fn status(&self) -> Status {
        match self {
            CliError::Solver(_) => Status::SolverFailure,
            CliError::Input { .. } | CliError::Io { .. } => Status::InputError,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
