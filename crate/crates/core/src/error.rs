use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed instance file. `line` is 0 when the problem is structural
    /// rather than syntactic.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported instance schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown builtin instance `{0}` (expected example1, example2 or endowment)")]
    UnknownBuiltin(String),

    #[error("chain under the policy is not unichain ({classes} recurrent classes)")]
    NotUnichain { classes: usize },

    #[error("{count} deterministic policies exceed the enumeration cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("time step {t} is beyond the policy horizon {horizon}")]
    HorizonExceeded { t: usize, horizon: usize },

    #[error("linear program is {0}")]
    LpStatus(&'static str),

    #[error("numerical failure in linear program solve: {0}")]
    Numerical(String),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("Assumption violated: {0}")]
    Assumption(String),
}
