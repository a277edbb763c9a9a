use thiserror::Error;

/// Process exit codes (BSD sysexits where one fits).
pub mod exit {
    pub const OK: i32 = 0;
    /// Some prompts failed; their records carry an `error` field.
    pub const PARTIAL: i32 = 2;
    pub const USAGE: i32 = 64;
    pub const DATA: i32 = 65;
    pub const NO_INPUT: i32 = 66;
    pub const UNAVAILABLE: i32 = 69;
    pub const IO: i32 = 74;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    /// Input that cannot be read, or holds nothing to run.
    #[error("input: {0}")]
    Input(String),
    /// Input that was read but cannot be used as asked.
    #[error("invalid data: {0}")]
    Data(String),
    /// The model server could not be reached at startup.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("output: {0}")]
    Output(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => exit::USAGE,
            HarnessError::Data(_) => exit::DATA,
            HarnessError::Input(_) => exit::NO_INPUT,
            HarnessError::Unavailable(_) => exit::UNAVAILABLE,
            HarnessError::Output(_) => exit::IO,
        }
    }

    pub(crate) fn output(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Output(format!("{}: {e}", path.display()))
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
