use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("column {0} is constant and cannot be standardized")]
    DegenerateColumn(usize),

    #[error("tau[{index}] = {value} is not strictly positive")]
    InvalidTau { index: usize, value: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate trace: the trace is constant, so autocorrelation is undefined")]
    DegenerateTrace,

    #[error("chain unstable: {clamps} of {iterations} sweeps needed a variance-scale clamp")]
    ChainUnstable { clamps: usize, iterations: usize },

    #[error("schema error: {0}")]
    SchemaError(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
