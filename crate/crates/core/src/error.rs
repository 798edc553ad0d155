use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("incompatible cell complexes: {0}")]
    IncompatibleCells(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("incompatible grids")]
    IncompatibleGrids,
    #[error("invalid energy specification: {0}")]
    InvalidSpec(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("regularization parameter must be positive, got {0}")]
    NonPositiveRegularization(f64),
    #[error("solver did not converge at a = {a}: residual {residual:e} after {iterations} iterations")]
    NotConverged { a: f64, residual: f64, iterations: usize },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("direction does not vanish on the boundary (max |value| = {0:e})")]
    DirectionNotVanishing(f64),
    #[error("field is not a solution: residual {0:e}")]
    NotASolution(f64),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("defining data has vanishing last component")]
    DegenerateDefiningData,
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
