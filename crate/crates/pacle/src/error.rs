//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or table-shape mismatch between two objects.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid input that fails a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// The equality graph of a conic program contains a cycle.
    #[error("cyclic equality structure: {0}")]
    CyclicEqualities(String),

    /// A conic program was certified infeasible. `max_violation` is the
    /// smallest achievable worst-case constraint violation.
    #[error("infeasible program: min attainable violation {max_violation:.3e} ({detail})")]
    Infeasible { max_violation: f64, detail: String },

    /// The solver hit its iteration budget before certifying optimality.
    #[error("solver iteration budget exhausted: {0}")]
    SolverLimit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
