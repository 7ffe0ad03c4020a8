use thiserror::Error;

use crate::cblist::VertexId;

/// Errors raised by the storage structure and the operations built on it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("external id {0:?} is already mapped to a live vertex")]
    DuplicateExternalId(String),
    #[error("unknown or deleted vertex {0}")]
    UnknownVertex(VertexId),
    #[error("sub-chain start cannot reach its end")]
    InvalidSubChain,
    #[error("negative edge weight on edge {src} -> {dst}")]
    NegativeWeight { src: VertexId, dst: VertexId },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Errors raised by the task runtime.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("task pool needs at least one task")]
    InvalidTaskCount,
    #[error("task {index} panicked: {message}")]
    TaskPanicked { index: usize, message: String },
    #[error("invalid strategy configuration: {0}")]
    InvalidStrategy(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Errors raised by the configuration probe.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProbeError {
    #[error("cannot allocate a {bytes}-byte probe working set")]
    InsufficientMemory { bytes: usize },
    #[error("probe sweep is empty or contains m = 0")]
    EmptySweep,
    #[error(transparent)]
    Engine(#[from] EngineError),
}
