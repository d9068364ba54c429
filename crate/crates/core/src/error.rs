use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for {count} orbitals")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("orbitals are linearly dependent (gram condition number {condition:.3e})")]
    RankDeficient { condition: f64 },
    #[error("degenerate quotient denominator {denominator:.3e} (numerator {numerator:.3e})")]
    DegenerateDenominator { numerator: f64, denominator: f64 },
    #[error("inadmissible pairing state (violation {0:.3e})")]
    Inadmissible(f64),
    #[error("coupling {kappa} is not below the critical value {critical}: no minimizer exists")]
    SupercriticalCoupling { kappa: f64, critical: f64 },
    #[error("kappa {kappa} lies below the computed table (smallest entry {smallest}); extend N_max")]
    BelowTable { kappa: f64, smallest: f64 },
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
