use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step index must be at least 1")]
    ZeroStepIndex,

    #[error("stratum index {index} out of range for {strata} strata")]
    StratumOutOfRange { index: usize, strata: usize },

    #[error("position x1 = {x1} outside [-{half_width}, {half_width}]")]
    OutOfDomain { x1: f64, half_width: f64 },

    #[error("weights left the simplex: {0}")]
    InvalidWeights(String),

    #[error("exit not reached within {cap} steps")]
    ExitNotReached { cap: u64 },

    #[error("quadrature did not converge: max relative change {change:e} > tolerance {tolerance:e}")]
    QuadratureNotConverged { change: f64, tolerance: f64 },

    #[error("fit needs at least 3 usable points, got {0}")]
    TooFewPoints(usize),

    #[error("degenerate abscissae: all x values coincide")]
    DegenerateAbscissae,

    #[error("model evaluation failed: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
