//! Error type shared across the crate.
//!
//! Variants map onto the CLI exit-code contract: configuration problems,
//! data/IO problems, and numeric divergence are distinguishable so callers
//! can exit with distinct codes.

use std::fmt;

pub type Result<T> = std::result::Result<T, MftError>;

#[derive(Debug)]
pub enum MftError {
    /// Invalid configuration: bad dimensions, out-of-range knobs, missing pieces.
    Config(String),
    /// Data and IO problems: unreadable corpora, empty sets, malformed files.
    Data(String),
    /// Numeric failure: non-finite values, divergence, failed invariants.
    Numeric(String),
}

impl MftError {
    pub fn config(msg: impl Into<String>) -> Self {
        MftError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        MftError::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        MftError::Numeric(msg.into())
    }

    /// Process exit code for this error class (0 is success, 2 is usage).
    pub fn exit_code(&self) -> i32 {
        match self {
            MftError::Config(_) => 3,
            MftError::Data(_) => 4,
            MftError::Numeric(_) => 5,
        }
    }
}

impl fmt::Display for MftError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MftError::Config(m) => write!(f, "config error: {m}"),
            MftError::Data(m) => write!(f, "data error: {m}"),
            MftError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl std::error::Error for MftError {}

impl From<std::io::Error> for MftError {
    fn from(e: std::io::Error) -> Self {
        MftError::Data(format!("io: {e}"))
    }
}
