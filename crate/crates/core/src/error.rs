use thiserror::Error;

use crate::lp::LpError;

pub type Result<T, E = DrmpcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DrmpcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A least-squares block row whose regressor matrix is rank deficient.
    #[error("singular fit in block row {block_row}: regressor rank {rank} < {columns} columns")]
    SingularFit {
        block_row: usize,
        rank: usize,
        columns: usize,
        /// Index of the left-out record when raised from a leave-one-out fit.
        left_out: Option<usize>,
    },

    #[error("solver backend error: {0}")]
    Solver(String),

    #[error(transparent)]
    Lp(#[from] LpError),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(DrmpcError::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
