use thiserror::Error;

use crate::filter::Belief;

/// A concrete input at which a numeric check failed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Witness {
    pub param: Vec<f64>,
    pub point: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown catalog model `{0}`")]
    UnknownModel(String),

    #[error("observation variant `{called}` does not match model flavor `{flavor}`")]
    WrongObservationVariant {
        called: &'static str,
        flavor: &'static str,
    },

    #[error("map evaluation failed at param={:?}, point={:?}: {}", .0.param, .0.point, .0.detail)]
    Evaluation(Witness),

    #[error("jacobian numerically singular at param={:?}, point={:?}: {}", .0.param, .0.point, .0.detail)]
    SingularJacobian(Witness),

    #[error("degenerate bayes update: observation has zero likelihood under the prior")]
    DegenerateUpdate { prior: Box<Belief> },

    #[error("innovation covariance is numerically singular")]
    SingularInnovation,

    #[error("grids do not match")]
    GridMismatch,

    #[error("empirical kernels were not drawn with matched seeds: {0}")]
    UnmatchedSeeds(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty action set")]
    EmptyActionSet,

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Numeric failures (as opposed to bad input) carry a witness or a prior.
    pub fn is_numeric_failure(&self) -> bool {
        matches!(
            self,
            Error::Evaluation(_)
                | Error::SingularJacobian(_)
                | Error::DegenerateUpdate { .. }
                | Error::SingularInnovation
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}
