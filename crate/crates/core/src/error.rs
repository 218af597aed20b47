use thiserror::Error;

use crate::lp::LpError;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Lp(#[from] LpError),

    /// The calibration program admits no scaling factors. `measurements` lists
    /// the calibration points whose constraints could not be met, when known.
    #[error("calibration program is infeasible (offending measurements: {measurements:?})")]
    Infeasible { measurements: Vec<usize> },

    #[error(
        "exact volume needs {terms} determinant terms, above the budget of {cap}; \
         use projected_volume instead"
    )]
    VolumeBudget { terms: u128, cap: u64 },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
