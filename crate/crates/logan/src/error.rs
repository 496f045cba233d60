use ndarray::Array2;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("path enumeration is limited to dimension {limit}, got {dim}")]
    OracleTooLarge { dim: usize, limit: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// The structure fit exhausted its outer loop without driving the
    /// acyclicity measure below tolerance. Carries the last iterate so
    /// callers can inspect or salvage it.
    #[error("structure fit stopped with acyclicity h = {h:.3e} above tolerance")]
    Convergence { h: f64, iterate: Box<Array2<f64>> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The decorrelated score for an edge had a denominator too close to
    /// zero to trust; the edge is untestable on this data split.
    #[error("degenerate projection for edge ({j1}, {j2}): denominator {denom:.3e}")]
    DegenerateProjection { j1: usize, j2: usize, denom: f64 },
}

impl Error {
    /// Process exit code contract: 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_) | Error::InvalidInput(_) | Error::OracleTooLarge { .. } => 2,
            Error::Data(_) | Error::Io { .. } => 3,
            Error::Convergence { .. }
            | Error::Numerical(_)
            | Error::DegenerateProjection { .. } => 4,
        }
    }
}
