use thiserror::Error;

use crate::skeleton::JointId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pose has no visible annotated joints")]
    NoVisibleJoints,

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("no person carries a labeled root-group joint")]
    NoLabeledJoints,

    #[error("ground-truth person {index} has no head box")]
    MissingHeadBox { index: usize },

    #[error("could not place {placed} of {requested} persons after {attempts} attempts")]
    PlacementFailure {
        requested: usize,
        placed: usize,
        attempts: usize,
    },

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("unknown joint id {0}")]
    UnknownJoint(JointId),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed field stack: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
