use std::fmt;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Io = 1,
    Config = 2,
    NotConverged = 3,
    Unresolved = 4,
    Mismatch = 5,
}

impl ExitCode {
    pub fn from_i32(v: i32) -> Option<Self> {
        Some(match v {
            0 => Self::Ok,
            1 => Self::Io,
            2 => Self::Config,
            3 => Self::NotConverged,
            4 => Self::Unresolved,
            5 => Self::Mismatch,
            _ => return None,
        })
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Config,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: ExitCode::Io,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<sigldp::Error> for CliError {
    fn from(e: sigldp::Error) -> Self {
        let code = match e {
            sigldp::Error::Io(_) => ExitCode::Io,
            sigldp::Error::NotConverged(_) => ExitCode::NotConverged,
            _ => ExitCode::Config,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
