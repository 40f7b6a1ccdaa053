use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid node id {node} (graph has {num_nodes} nodes)")]
    InvalidNode { node: usize, num_nodes: usize },

    #[error("invalid attribute dimension {dim} for node {node} (feature dim is {feature_dim})")]
    InvalidAttribute {
        node: usize,
        dim: usize,
        feature_dim: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("node {0} has no training label")]
    Unlabeled(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged after {iterations} iterations (loss = {loss}, grad norm = {grad_norm})")]
    Divergence {
        iterations: usize,
        loss: f64,
        grad_norm: f64,
    },

    #[error("non-finite gradient contribution from node {0}")]
    NonFiniteGradient(usize),

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("system size {size} exceeds the direct-solve ceiling {ceiling}")]
    TooLargeForDirect { size: usize, ceiling: usize },

    #[error("stochastic estimator diverged at iteration {iteration}: scale {scale} is too small")]
    ScaleTooSmall { iteration: usize, scale: f64 },

    #[error("empty set: {0}")]
    EmptySet(&'static str),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable kind used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidNode { .. } => "invalid_node",
            Error::InvalidAttribute { .. } => "invalid_attribute",
            Error::InvalidGraph(_) => "invalid_graph",
            Error::InvalidRequest(_) => "invalid_request",
            Error::Config(_) => "config",
            Error::Unlabeled(_) => "unlabeled_node",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Divergence { .. } => "divergence",
            Error::NonFiniteGradient(_) => "non_finite_gradient",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::TooLargeForDirect { .. } => "too_large_for_direct",
            Error::ScaleTooSmall { .. } => "scale_too_small",
            Error::EmptySet(_) => "empty_set",
            Error::Parse { .. } => "parse",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
