//! Prefetch-aware dynamic graph storage with interleaved execution.
//!
//! The storage structure ([`CbList`]) keeps a vertex table plus, per vertex,
//! either one cache-line sized *small chunk* of sorted edge records or a B+
//! tree whose leaves are chained. Every chunk and leaf of the whole graph is
//! additionally threaded into one singly-linked *global traversal chain* in
//! logical-ID order, so full scans look like a linked-list walk to the
//! hardware prefetcher.
//!
//! On top of the structure sit suspendable access operations ([`access`])
//! that issue a software prefetch and yield before touching a block, a
//! cooperative task runtime with polling and trimmed-polling schedulers
//! ([`engine`]), a strategy layer deciding where software prefetching pays
//! off ([`adapt`]), and the analytics workloads ([`algos`]).
//!
//! The storage is generic over the edge-weight scalar (see [`EdgeWeight`]);
//! [`Graph`] and [`FloatGraph`] are the two instantiations used by the tools.

pub mod access;
pub mod adapt;
pub mod algos;
pub mod cblist;
pub mod engine;
mod error;
pub mod prefetch;
mod weight;

pub use access::{CounterSnapshot, TaskCtx};
pub use adapt::{PrefetchStrategy, StrategyConfig};
pub use cblist::{
    AuditReport, BlockKind, BlockRef, CbList, CbListConfig, EdgeRecord, InsertOutcome,
    PropertyMode, VertexId, VertexRecord,
};
pub use engine::Executor;
pub use error::{EngineError, GraphError, ProbeError};
pub use weight::EdgeWeight;

/// Integer-weighted graph; synthesized weights are integers in `[1, 100]`.
pub type Graph = CbList<u32>;

/// Graph with double-precision edge weights.
pub type FloatGraph = CbList<f64>;

/// Scalar used for PageRank scores by the tools.
pub type Rank = f64;
