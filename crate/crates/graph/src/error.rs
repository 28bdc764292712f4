use thiserror::Error;

use crate::graph::NodeId;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: NodeId, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge {0} -- {1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("asymmetric adjacency between {0} and {1}")]
    Asymmetric(NodeId, NodeId),
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    FeatureDimension { expected: usize, found: usize },
    #[error("pattern graph must be connected")]
    DisconnectedPattern,
    #[error("pattern has {size} nodes, exhaustive search budget is {limit}")]
    PatternTooLarge { size: usize, limit: usize },
    #[error("graph has {size} nodes, limit is {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum WalkError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("adjacency query on undiscovered node {0}")]
    Undiscovered(NodeId),
    #[error("trace is truncated; the neighborhood cannot be reconstructed")]
    IncompleteTrace,
    #[error("step budget {budget} is smaller than the required {required}")]
    BudgetTooSmall { budget: usize, required: usize },
    #[error("invalid walk request: {0}")]
    Invalid(String),
}
