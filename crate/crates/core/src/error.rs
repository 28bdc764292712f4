use agentnet_autodiff::TensorError;
use agentnet_graph::GraphError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("graph {0} has no nodes")]
    EmptyGraph(usize),
    #[error("graph has feature dimension {found}, model expects {expected}")]
    FeatureDimension { expected: usize, found: usize },
    #[error("non-finite loss at step {step} (seed {seed}, config {config_hash})")]
    NonFiniteLoss {
        step: usize,
        seed: u64,
        config_hash: String,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
