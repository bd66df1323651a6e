use std::path::Path;

use selanchor::formats::ParseError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Missing or unreadable files, malformed lines, bad inline values.
    #[error("{0}")]
    Input(String),

    /// A parameter or intermediate value outside its allowed range.
    #[error("{0}")]
    Invariant(String),

    /// Every malformed line found, as `path:line: message`.
    #[error("{} malformed line(s)", .0.len())]
    Parse(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Parse(_) => 1,
            CliError::Invariant(_) => 2,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

/// Core errors raised while validating flags.
pub fn invariant(err: selanchor::Error) -> CliError {
    CliError::Invariant(err.to_string())
}

/// Core errors raised while reading a file.
pub fn input_at(path: &Path, err: selanchor::Error) -> CliError {
    CliError::Input(format!("{}: {err}", path.display()))
}

pub fn parse_listing(path: &Path, errors: &[ParseError]) -> Vec<String> {
    errors
        .iter()
        .map(|e| match e.field {
            Some(f) => format!("{}:{}: field {f}: {}", path.display(), e.line, e.message),
            None => format!("{}:{}: {}", path.display(), e.line, e.message),
        })
        .collect()
}

pub type CliResult<T> = Result<T, CliError>;
