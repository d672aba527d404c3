use crate::covmodel::ModelFit;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid table: {0}")]
    InvalidTable(String),

    /// An odds-ratio-consuming operation met a zero cell. The bound theory
    /// presumes strictly positive cell probabilities, so this fails fast
    /// instead of returning an infinite or NaN ratio.
    #[error("odds ratio undefined: cell (z={z}, y={y}) is zero")]
    UndefinedOddsRatio { z: u8, y: u8 },

    #[error("restriction selects cells with zero total mass")]
    EmptyRestriction,

    #[error("invalid sensitivity parameters: {0}")]
    InvalidParams(String),

    #[error("infeasible cell box: {0}")]
    InfeasibleBox(String),

    #[error("no root of the fixed-odds-ratio quadratic yields a valid table: {0}")]
    InfeasibleMarginals(String),

    #[error("cell (z={z}, y={y}) has boundary proportion {value}; studentized sets need cells in (0,1)")]
    BoundaryCell { z: u8, y: u8, value: f64 },

    #[error("invalid covariance matrix: {0}")]
    InvalidCovariance(String),

    #[error("degenerate confidence set: projected covariance has rank 0")]
    DegenerateSet,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Newton-Raphson ran out of iterations. The last iterate is kept so
    /// callers can inspect (or knowingly reuse) the partial fit.
    #[error("model fit did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConverged {
        iterations: usize,
        grad_norm: f64,
        last_fit: Box<ModelFit>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
