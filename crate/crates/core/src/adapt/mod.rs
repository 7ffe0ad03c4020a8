//! Execution strategy selection: where to issue software prefetches, how
//! many interleaved tasks to run, and which partitioner and scheduler fit a
//! task class.

mod probe;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cblist::BlockKind;
use crate::error::EngineError;

pub use probe::{detect_llc_bytes, probe_config, CostModelParams, LayoutClass, LayoutCosts, ProbeOptions, ProbeResult};

/// Prefix length used by [`PrefetchStrategy::HybridHotness`] unless tuned.
pub const DEFAULT_HOTNESS_PREFIX: u32 = 4;

/// Where software prefetch hints (and the yields paired with them) go.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrefetchStrategy {
    /// Hardware prefetching only: no hints, no yields.
    AllHard,
    /// A hint and a yield before every block.
    AllSoft,
    /// Skip small chunks, prefetch B+ tree nodes.
    HybridBlockSize,
    /// Prefetch only the first `k` blocks of each traversal.
    HybridHotness(u32),
}

impl PrefetchStrategy {
    /// The four strategies, with the default hotness prefix.
    pub const ALL: [PrefetchStrategy; 4] = [
        PrefetchStrategy::AllHard,
        PrefetchStrategy::AllSoft,
        PrefetchStrategy::HybridBlockSize,
        PrefetchStrategy::HybridHotness(DEFAULT_HOTNESS_PREFIX),
    ];

    /// Rank from hardware-only (0) to software-everywhere (2).
    pub fn softness(self) -> u8 {
        match self {
            PrefetchStrategy::AllHard => 0,
            PrefetchStrategy::HybridBlockSize | PrefetchStrategy::HybridHotness(_) => 1,
            PrefetchStrategy::AllSoft => 2,
        }
    }
}

impl fmt::Display for PrefetchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrefetchStrategy::AllHard => f.write_str("all-hard"),
            PrefetchStrategy::AllSoft => f.write_str("all-soft"),
            PrefetchStrategy::HybridBlockSize => f.write_str("hybrid-block"),
            PrefetchStrategy::HybridHotness(k) => write!(f, "hybrid-hot:{k}"),
        }
    }
}

impl FromStr for PrefetchStrategy {
    type Err = String;

    /// Accepts `all-hard`, `all-soft`, `hybrid-block` and `hybrid-hot[:k]`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "all-hard" | "hard" => Ok(PrefetchStrategy::AllHard),
            "all-soft" | "soft" => Ok(PrefetchStrategy::AllSoft),
            "hybrid-block" => Ok(PrefetchStrategy::HybridBlockSize),
            "hybrid-hot" => Ok(PrefetchStrategy::HybridHotness(DEFAULT_HOTNESS_PREFIX)),
            _ => match s.strip_prefix("hybrid-hot:") {
                Some(k) => k
                    .parse()
                    .map(PrefetchStrategy::HybridHotness)
                    .map_err(|_| format!("bad hotness prefix in {s:?}")),
                None => Err(format!(
                    "unknown strategy {s:?} (expected all-hard, all-soft, hybrid-block or hybrid-hot[:k])"
                )),
            },
        }
    }
}

/// Outcome of consulting the gate for one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateDecision {
    pub hint: bool,
    pub yield_now: bool,
}

impl GateDecision {
    const ON: GateDecision = GateDecision { hint: true, yield_now: true };
    const OFF: GateDecision = GateDecision { hint: false, yield_now: false };
}

/// Decides whether the block at position `index` of a traversal gets a
/// software prefetch. A yield without a pending fetch only costs a switch,
/// so `yield_now` always equals `hint`.
#[inline]
pub fn gate(strategy: PrefetchStrategy, kind: BlockKind, index: usize) -> GateDecision {
    let on = match strategy {
        PrefetchStrategy::AllHard => false,
        PrefetchStrategy::AllSoft => true,
        PrefetchStrategy::HybridBlockSize => kind != BlockKind::Chunk,
        PrefetchStrategy::HybridHotness(k) => index < k as usize,
    };
    if on {
        GateDecision::ON
    } else {
        GateDecision::OFF
    }
}

/// How work is cut into per-task pieces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Partitioner {
    /// Contiguous segments of the traversal chain.
    GtChain,
    /// Contiguous logical-id ranges of the vertex table.
    VertexRange,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchedulerKind {
    /// Round-robin until every task is done.
    Polling,
    /// Round-robin; the last unfinished task stops yielding.
    Trimmed,
}

/// Everything the runtime needs to execute a task class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub prefetch_strategy: PrefetchStrategy,
    /// Interleaved tasks per worker thread.
    pub tasks_per_thread: usize,
    pub partitioner: Partitioner,
    pub scheduler: SchedulerKind,
    /// Frontier fraction at or above which edge processing scans the chain.
    pub dense_threshold: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            prefetch_strategy: PrefetchStrategy::AllSoft,
            tasks_per_thread: 8,
            partitioner: Partitioner::GtChain,
            scheduler: SchedulerKind::Polling,
            dense_threshold: 0.05,
        }
    }
}

impl StrategyConfig {
    /// Sequential execution: hardware prefetching, one task, polling.
    pub fn sequential() -> Self {
        StrategyConfig {
            prefetch_strategy: PrefetchStrategy::AllHard,
            tasks_per_thread: 1,
            ..StrategyConfig::default()
        }
    }

    pub fn with_strategy(mut self, s: PrefetchStrategy) -> Self {
        self.prefetch_strategy = s;
        self
    }

    pub fn with_tasks(mut self, m: usize) -> Self {
        self.tasks_per_thread = m;
        self
    }

    pub fn with_partitioner(mut self, p: Partitioner) -> Self {
        self.partitioner = p;
        self
    }

    pub fn with_scheduler(mut self, s: SchedulerKind) -> Self {
        self.scheduler = s;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.tasks_per_thread == 0 {
            return Err(EngineError::InvalidTaskCount);
        }
        if !(self.dense_threshold > 0.0 && self.dense_threshold <= 1.0) {
            return Err(EngineError::InvalidStrategy(format!(
                "dense threshold {} outside (0, 1]",
                self.dense_threshold
            )));
        }
        Ok(())
    }
}

/// Workload families with distinct access patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskClass {
    /// Every vertex and edge, e.g. PageRank.
    FullScan,
    /// Neighborhoods of an active subset, e.g. BFS or SSSP.
    Frontier,
    /// Single-edge lookups.
    PointQuery,
    /// Grouped edge insertions and deletions.
    BatchUpdate,
}

impl TaskClass {
    /// Memory layout whose misses dominate the class.
    pub fn dominant_layout(self) -> LayoutClass {
        match self {
            TaskClass::FullScan | TaskClass::Frontier => LayoutClass::Chained,
            TaskClass::PointQuery | TaskClass::BatchUpdate => LayoutClass::Tree,
        }
    }
}

/// Maps a task class and probe measurements to an execution strategy.
///
/// Scans use chain partitioning with polling, frontier and point work use
/// vertex ranges with trimmed polling, updates always use trimmed polling.
/// The prefetch strategy follows the redundancy rule: when a layout's
/// expected miss cost `C_m * (1 - P_h)` is below the switch cost, software
/// prefetching there is skipped.
pub fn tune(class: TaskClass, probe: &ProbeResult) -> StrategyConfig {
    let (partitioner, scheduler) = match class {
        TaskClass::FullScan => (Partitioner::GtChain, SchedulerKind::Polling),
        TaskClass::Frontier | TaskClass::PointQuery => (Partitioner::VertexRange, SchedulerKind::Trimmed),
        TaskClass::BatchUpdate => (Partitioner::VertexRange, SchedulerKind::Trimmed),
    };
    let params = &probe.params;
    let dominant = class.dominant_layout();
    let prefetch_strategy = if !params.redundant(dominant) {
        PrefetchStrategy::AllSoft
    } else if params.redundant(LayoutClass::Tree) {
        PrefetchStrategy::AllHard
    } else {
        match class {
            TaskClass::FullScan => PrefetchStrategy::HybridHotness(probe.hotness_prefix),
            _ => PrefetchStrategy::HybridBlockSize,
        }
    };
    StrategyConfig {
        prefetch_strategy,
        tasks_per_thread: probe.recommended_m.max(1),
        partitioner,
        scheduler,
        dense_threshold: StrategyConfig::default().dense_threshold,
    }
}
