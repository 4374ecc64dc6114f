use thiserror::Error;

use crate::positioning::GdSolution;
use crate::tip::EstimationResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Scenario or solver parameters that violate a documented constraint.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Geometry outside the domain of a formula (coincident UAVs, etc).
    #[error("domain error: {0}")]
    Domain(String),

    /// Non-finite value produced during an iterative solve.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("problem too large for exhaustive search: n = {n}, limit = {limit}")]
    TooLarge { n: usize, limit: usize },

    /// Every gradient-descent restart ended above the residual threshold.
    #[error("no restart reached the residual threshold (best error {:.3e} m^2)", .best.error)]
    RestartsExhausted { best: Box<GdSolution> },

    /// TIP restart budget exhausted; carries the best run seen.
    #[error("positioning failed after all restarts (best residual {:.3e} m^2)", .best.residual)]
    TipFailed { best: Box<EstimationResult> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
