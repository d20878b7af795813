use std::fmt;
use std::process::ExitCode;

use udrive::Error;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Usage = 1,
    Config = 2,
    Runtime = 3,
    Divergence = 4,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> ExitCode {
        ExitCode::from(s as u8)
    }
}

/// A failed command: the exit class and a message for standard error.
#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { status: Status::Usage, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self { status: Status::Config, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { status: Status::Runtime, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) => Status::Config,
            Error::Diverged(_) | Error::Divergence { .. } => Status::Divergence,
            _ => Status::Runtime,
        };
        Self { status, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;
