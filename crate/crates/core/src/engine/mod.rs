//! Cooperative task runtime: pools and schedulers, work partitioning,
//! grouped batch updates, and the vertex/edge processing API.

mod batch;
mod exec;
mod partition;
mod task;

pub use crate::access::SubChain;
pub use batch::{batch_update, group_by_source, Phase, SourceGroup, UpdateOp, UpdateStats};
pub use exec::{Bitmap, EdgeMode, EdgeRound, ExecStats, Executor, Frontier};
pub use partition::{partition_gtchain, partition_vertex_table, split_even};
pub use task::{
    build_pool, polling_scheduler, trimmed_polling_scheduler, SchedulerStats, SuspendableTask, TaskPool,
};

#[cfg(test)]
mod tests;
