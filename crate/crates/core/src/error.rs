use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported modulation order {0}; expected 2, 4, 8 or 16")]
    UnsupportedModulation(usize),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Conic(#[from] ftn_conic::ConicError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
