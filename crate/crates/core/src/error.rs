use thiserror::Error;

/// Errors raised by the solver kernels and the run orchestration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("field length {got} does not match grid with {expected} cells")]
    Shape { expected: usize, got: usize },

    #[error("non-zero boundary flux at face {face}: {value}")]
    BoundaryFlux { face: usize, value: f64 },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("{model}: concentration {value} outside admissible range [0, {max}]")]
    Domain {
        model: &'static str,
        value: f64,
        max: f64,
    },

    #[error("regularization barrier breached: {0}")]
    Barrier(String),

    #[error("step size underflow at t = {t} (dt = {dt}) after {rejects} rejections")]
    StepFailure {
        t: f64,
        dt: f64,
        rejects: usize,
        last_good: Box<crate::dynamics::State>,
    },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("{0}")]
    Study(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
