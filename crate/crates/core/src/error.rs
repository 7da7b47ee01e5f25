use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty point set")]
    EmptySet,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("inverse iteration did not converge (residual {residual:e} after {iterations} iterations)")]
    InversionFailure { residual: f64, iterations: usize },
    #[error("bump supports overlap between sites {0} and {1}")]
    SupportOverlap(usize, usize),
    #[error("displacement too large for an invertible bump (Lipschitz {0:.4} >= 1)")]
    NotInvertible(f64),
    #[error("foliation not preserved: {reason} (witness {witness:?})")]
    NotInvariant { reason: String, witness: Vec<f64> },
    #[error("no shadow found at this resolution (failed at layer {layer})")]
    ShadowNotFound { layer: usize },
    #[error("leaf return failed with defect {defect:e}")]
    LeafReturnFailed { defect: f64 },
    #[error("empty image at sample {0}: shadowing failed at this resolution")]
    EmptyImage(usize),
    #[error("g(x) for sample {0} is not among the sampled base points")]
    MissingSample(usize),
    #[error("search budget exceeded after exploring {explored:.3} of the state space")]
    Timeout { explored: f64 },
    #[error("no certified (e, N) pair within budget")]
    NotCertified,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FsError {
    fn from(e: std::io::Error) -> Self {
        FsError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FsError>;
