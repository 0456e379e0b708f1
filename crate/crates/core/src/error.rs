use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("not a probability vector: {0}")]
    Simplex(String),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("solver did not converge after {iters} iterations (residual {residual:.3e})")]
    SolverStalled { iters: usize, residual: f64 },

    #[error("integration step too large: {0}")]
    StepTooLarge(String),

    #[error("non-finite rate from model on edge {edge} ({value})")]
    NonFiniteRate { edge: String, value: f64 },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("{0}")]
    Invalid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
