use crate::lattice::NodeId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("cycle detected through node {0}")]
    Cycle(NodeId),
    #[error("invalid lattice: {}", .0.join("; "))]
    InvalidLattice(Vec<String>),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
