use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the model, the optimizers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// The expansion point violates its own convexified constraints, or no
    /// precoder meets the SINR targets within the power budget.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("iteration limit reached after {iterations} iterations")]
    MaxIterations { iterations: usize },

    /// The proximal coefficient of a position update vanished; the per-antenna
    /// objective is flat in that antenna's coordinates.
    #[error("degenerate proximal coefficient {0:e}")]
    DegenerateDelta(f64),

    #[error("no rotation angle keeps the linear array inside the region")]
    NoFeasibleAngle,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
