use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// Every violated invariant, one entry each.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("{0}")]
    Domain(String),

    #[error("mass matrix is singular (det = {det:e})")]
    SingularMassMatrix { det: f64 },

    #[error("simulation became unstable at t = {time:.6} s: {detail}")]
    Instability { time: f64, detail: String },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
