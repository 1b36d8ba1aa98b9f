use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("index {index} out of range [{lo}, {hi}]")]
    IndexOutOfRange { index: i64, lo: i64, hi: i64 },

    #[error("spectrum not converged after {refinements} refinements (relative change {change:.3e})")]
    NotConverged { refinements: usize, change: f64 },

    #[error("LAPACK routine {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error("no separatrix: {0}")]
    NoSeparatrix(String),

    #[error("empty classification: {0}")]
    EmptyClassification(String),

    #[error("unitarity defect {defect:.3e} exceeds {limit:.1e}")]
    Unitarity { defect: f64, limit: f64 },

    #[error("edge-group leakage {leak:.3e} exceeds {limit:.1e}; increase q_halfwidth")]
    Leakage { leak: f64, limit: f64 },

    #[error("fit window [{n1}, {n2}] overlaps saturation at N = {n_sat}")]
    WindowOverlapsSaturation { n1: usize, n2: usize, n_sat: usize },

    #[error("trajectory too short: {0}")]
    TrajectoryTooShort(String),

    #[error("no chaotic band found: {0}")]
    NoChaoticLayer(String),

    #[error("ensemble escaped the layer region: {0}")]
    EnsembleEscaped(String),

    #[error("classical integration failed: {0}")]
    Integration(String),

    #[error("cache file {path} is corrupt: {reason}")]
    CacheCorrupt { path: PathBuf, reason: String },

    #[error("missing upstream stage: {0}")]
    MissingStage(String),

    #[error("{failed} of {total} scan points failed")]
    PartialScan { failed: usize, total: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Process exit code: 1 validation, 2 numerical failure, 3 partial scan failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::GridTooSmall(_)
            | Error::IndexOutOfRange { .. }
            | Error::Toml(_)
            | Error::MissingStage(_)
            | Error::TrajectoryTooShort(_) => 1,
            Error::PartialScan { .. } => 3,
            _ => 2,
        }
    }
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
