use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss((usize, usize)),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("need both classes present: {0}")]
    SingleClass(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite_epoch:?})")]
    Diverged {
        epoch: usize,
        last_finite_epoch: Option<usize>,
    },

    #[error("invalid record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("no trajectories")]
    NoTrajectories,

    #[error("inconsistent observation dimension: {first} vs {other} (record {id})")]
    InconsistentDim {
        first: usize,
        other: usize,
        id: String,
    },

    #[error("missing ground truth for trajectory {0}")]
    MissingTruth(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
