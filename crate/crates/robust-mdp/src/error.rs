use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by problem construction, the solvers, and file ingestion.
#[derive(Debug, Error)]
pub enum Error {
    #[error("state space must contain at least one point")]
    EmptyStateSpace,
    #[error("action space must contain at least one point")]
    EmptyActionSpace,
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("points {i} and {j} coincide")]
    DuplicatePoint { i: usize, j: usize },
    #[error("weight {index} is {value}, below the -1e-12 floor")]
    NegativeWeight { index: usize, value: f64 },
    #[error("distribution weights sum to {sum}, outside 1 +/- 1e-9")]
    DistributionSum { sum: f64 },
    #[error("distribution supported on {got} states, state space has {expected}")]
    SupportMismatch { expected: usize, got: usize },
    #[error("kernel entry missing for state {state}, action {action}")]
    MissingKernelEntry { state: usize, action: usize },
    #[error("reward table entry ({state},{action},{next}) is {value}, not finite")]
    NonFiniteReward {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },
    #[error("{context}: expected {expected} entries, found {got}")]
    WrongCount {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("discount factor must lie strictly inside (0,1), got {alpha}")]
    InvalidDiscount { alpha: f64 },
    #[error("ambiguity radius must be nonnegative and finite, got {epsilon}")]
    InvalidRadius { epsilon: f64 },
    #[error("Wasserstein order must be a positive integer, got {q}")]
    InvalidOrder { q: u32 },
    #[error("cost matrix built for order {built}, used with order {used}")]
    OrderMismatch { built: u32, used: u32 },
    #[error("probability must lie in [0,1], got {p}")]
    InvalidProbability { p: f64 },
    #[error("binomial support must be exactly the integers 0..={n} on the line")]
    BadBinomialSupport { n: u32 },
    #[error("tolerance must be positive and finite, got {tol}")]
    InvalidTolerance { tol: f64 },
    #[error("operation requires a true kernel, but the problem carries none")]
    MissingTrueKernel,
    #[error("series diverges: alpha * L_P = {product} >= 1")]
    DivergentSeries { product: f64 },
    #[error("transport solve failed to terminate; this indicates an internal bug")]
    TransportFailure,
    #[error("value iteration stopped after {max_iter} sweeps with residual {residual}")]
    NonConvergence { max_iter: usize, residual: f64 },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
