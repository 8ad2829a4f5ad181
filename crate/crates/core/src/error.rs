use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Per-restart bookkeeping of the subspace power method, carried by
/// [`Error::IncompleteRecovery`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AcceptanceStats {
    pub restarts: usize,
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: usize,
    pub degenerate: usize,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid activation: {detail} (at t = {location})")]
    InvalidActivation { detail: String, location: f64 },

    #[error("shift {value} outside admissible interval [-{tau_inf}, {tau_inf}]")]
    ShiftOutOfRange { value: f64, tau_inf: f64 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-finite function value at stencil point {point:?}")]
    NonFiniteEvaluation { point: Vec<f64> },

    #[error("subspace deficient: sigma_m / sigma_1 = {ratio:e}")]
    SubspaceDeficient { ratio: f64 },

    #[error("iterate collapsed to the zero vector")]
    ZeroIterate,

    #[error("incomplete recovery: found {} of {wanted} weights after {} restarts", partial.len(), stats.restarts)]
    IncompleteRecovery {
        wanted: usize,
        partial: Vec<Vec<f64>>,
        stats: AcceptanceStats,
    },

    #[error("Hadamard Grammian of order {order} is singular or ill-conditioned (cond = {cond:e})")]
    SingularSystem { order: u32, cond: f64 },

    #[error("gradient descent diverged at step {step} with step size {gamma:e} (estimated 1/lambda_max = {stable_step:e})")]
    Divergence { step: usize, gamma: f64, stable_step: f64 },

    #[error("empty sample set")]
    EmptySamples,

    #[error("usage error: {0}")]
    Usage(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { .. } => 3,
            Error::SubspaceDeficient { .. }
            | Error::ZeroIterate
            | Error::IncompleteRecovery { .. }
            | Error::SingularSystem { .. }
            | Error::Divergence { .. }
            | Error::NonFiniteEvaluation { .. } => 3,
            _ => 2,
        }
    }
}
