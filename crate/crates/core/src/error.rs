use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unstable transfer function: {0}")]
    Unstable(String),

    #[error("transfer function is not strictly proper: numerator degree {numerator} >= denominator degree {denominator}")]
    NotStrictlyProper {
        numerator: usize,
        denominator: usize,
    },

    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),

    #[error("argument {value} outside domain: {what}")]
    Domain { what: &'static str, value: f64 },

    /// Two sorted coordinate values coincide (or the smallest one is zero).
    /// `second` is `None` when `first` maps to a zero coordinate.
    #[error("degenerate grid: instants {first} and {second:?} give coincident or zero kernel coordinates")]
    DegenerateGrid { first: usize, second: Option<usize> },

    #[error("quadrature did not converge (estimate {estimate:e}, error {error:e}): {context}")]
    Quadrature {
        estimate: f64,
        error: f64,
        context: String,
    },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tuning failed: every restart diverged ({restarts} restarts)")]
    TuningFailed {
        restarts: usize,
        traces: Vec<crate::tuning::TraceRow>,
    },

    #[error("experiment aborted: {failures} of {total} tuning runs failed")]
    TooManyFailures { failures: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
