use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for a graph with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("self-loop on node {0}; self-loops are implicit")]
    SelfLoop(usize),

    #[error("graph must have at least one node")]
    EmptyGraph,

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("edge list line {line}: {message}")]
    EdgeList { line: usize, message: String },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("epsilon {epsilon} outside (0, {max}]")]
    EpsilonOutOfRange { epsilon: f64, max: f64 },

    #[error("n too small for the epsilon upper bound (2n = {0} < 3 eigenvalues)")]
    TooFewEigenvalues(usize),

    #[error("eigenvalue computation did not converge")]
    EigenFailure,

    #[error("fitted contraction factor {gamma} is not in (0, 1)")]
    NotContracting { gamma: f64 },

    #[error("not enough points for a fit: {got} < {required}")]
    InsufficientPoints { got: usize, required: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid constraint set: {0}")]
    InvalidSet(String),

    #[error("point is not in the constraint set")]
    NotInSet,

    #[error("agent index {index} out of range for {n} agents")]
    AgentOutOfRange { index: usize, n: usize },

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("iteration budget must be positive")]
    EmptyBudget,

    #[error("insufficient rows: {got} < {required}")]
    InsufficientRows { got: usize, required: usize },

    #[error("nonpositive optimality gap {gap} at k = {k}")]
    NonPositiveGap { k: usize, gap: f64 },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics themselves (NaN, divergence), as
    /// opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::EigenFailure | Error::NotContracting { .. }
        )
    }
}
