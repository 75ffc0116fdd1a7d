use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed genotype: {0:?}")]
    MalformedGenotype(String),

    #[error("non-finite network input")]
    NonFiniteInput,

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("non-finite data Jacobian at probe {probe}")]
    NonFiniteJacobian { probe: usize },

    #[error("projection rank {k} out of range 1..={max}")]
    ProjectionRank { k: usize, max: usize },

    #[error("degenerate architecture {0}: principal singular value is zero")]
    DegenerateArchitecture(String),

    #[error("degenerate projection: zero vector cannot be normalized")]
    DegenerateProjection,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("contrastive loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("kernel matrix factorization failed after maximum jitter")]
    Factorization,

    #[error("correlation undefined for constant input")]
    UndefinedCorrelation,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("search budget {budget} exceeds space size {size}")]
    BudgetExceedsSpace { budget: usize, size: usize },

    #[error("zero-variance input")]
    ZeroVariance,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("missing {0} in benchmark or embedding map")]
    Missing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
