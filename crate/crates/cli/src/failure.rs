use std::fmt;
use std::process::ExitCode;

/// Error carrying the process exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Violation(String),
    Io(String),
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure::Usage(msg.into())
    }

    pub fn io(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        Failure::Io(format!("{context}: {err}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Usage(_) => 2,
            Failure::Violation(_) => 3,
            Failure::Io(_) => 4,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Violation(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<fibottention::Error> for Failure {
    fn from(e: fibottention::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}
