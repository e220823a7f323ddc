use thiserror::Error;

#[derive(Debug, Error)]
pub enum MltError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("layer index {layer} at line {line} outside [1, {n_layers}]")]
    LayerRange {
        line: usize,
        layer: i64,
        n_layers: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("non-finite value encountered: {0}")]
    Divergence(String),

    #[error("layer {layer} has {available} non-edges, {needed} required")]
    InsufficientNonEdges {
        layer: usize,
        available: usize,
        needed: usize,
    },

    #[error("all {0} restarts diverged")]
    AllRestartsFailed(usize),

    #[error("statistic undefined: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MltError>;
