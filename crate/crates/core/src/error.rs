use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the inference library.
#[derive(Debug, Error)]
pub enum GviError {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// A density was requested from a Dirac mass, or an operation needs an
    /// atomless measure.
    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),

    /// The divergence is +inf for the given pair (e.g. KL against a singular measure).
    #[error("divergence is infinite: {0}")]
    InfiniteDivergence(String),

    #[error("quadrature did not reach tolerance {tol:e} on [{lo}, {hi}]")]
    NonIntegrable { lo: f64, hi: f64, tol: f64 },

    #[error("cichocki limit inconclusive: last value {last}, last increment {increment:e}")]
    Inconclusive { last: f64, increment: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("loss model has no observations")]
    EmptyData,

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("divergence `{0}` has no finite upper bound")]
    UnboundedDivergence(String),

    /// A convex combination left the variational family.
    #[error("family closure: {0}")]
    FamilyClosure(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("schedule violation: {0}")]
    ScheduleViolation(String),

    #[error("contract failed: {0}")]
    ContractViolation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, GviError>;
