use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("root search for the cross-section mode did not converge after {steps} steps (N={n})")]
    RootSearch { n: usize, steps: usize },

    #[error("point ({x1:.6}, {rho:.6}) lies outside the mesh")]
    OutsideMesh { x1: f64, rho: f64 },

    #[error("section x1={t} lies outside the tube [{lo}, {hi}]")]
    OutsideTube { t: f64, lo: f64, hi: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("eigensolver: {0}")]
    Eigen(String),

    #[error("shifted operator is not positive definite at lambda={lambda}: weight violates the spectral gap")]
    SpectralGap { lambda: f64 },

    #[error("degenerate field: {0}")]
    Degenerate(String),

    #[error("empty integration region: {0}")]
    EmptyRegion(String),

    #[error("stage `{stage}` failed")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn stage(stage: impl Into<String>, source: Error) -> Self {
        Error::Stage { stage: stage.into(), source: Box::new(source) }
    }
}
