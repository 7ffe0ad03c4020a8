//! Batched updates grouped by source vertex.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::exec::Executor;
use super::task::SchedulerStats;
use crate::access::{locate_gated, CounterSnapshot};
use crate::cblist::{CbList, EdgeRecord, InsertOutcome, Store, VertexId, VertexRecord};
use crate::error::{EngineError, GraphError};
use crate::EdgeWeight;

/// One update of a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum UpdateOp<W> {
    InsertEdge { src: VertexId, dst: VertexId, prop: W },
    DeleteEdge { src: VertexId, dst: VertexId },
    UpdateEdgeProp { src: VertexId, dst: VertexId, prop: W },
    InsertVertex { ext: String, prop: Option<String> },
    DeleteVertex { v: VertexId },
    UpdateVertexProp { v: VertexId, prop: Option<String> },
}

impl<W> UpdateOp<W> {
    /// Source vertex of an edge operation; `None` for vertex operations.
    pub fn source(&self) -> Option<VertexId> {
        match self {
            UpdateOp::InsertEdge { src, .. } | UpdateOp::DeleteEdge { src, .. } | UpdateOp::UpdateEdgeProp { src, .. } => {
                Some(*src)
            }
            _ => None,
        }
    }
}

/// Edge operations of one source vertex, in batch order, tagged with their
/// batch index.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceGroup<'b, W> {
    pub src: VertexId,
    pub ops: Vec<(usize, &'b UpdateOp<W>)>,
}

/// A stretch of a batch: vertex operations applied one by one, or edge
/// operations grouped by source and applied concurrently.
#[derive(Clone, Debug, PartialEq)]
pub enum Phase<'b, W> {
    Serial(Vec<(usize, &'b UpdateOp<W>)>),
    Grouped(Vec<SourceGroup<'b, W>>),
}

type Groups<'b, W> = BTreeMap<u32, Vec<(usize, &'b UpdateOp<W>)>>;

fn flush_groups<'b, W>(groups: &mut Groups<'b, W>, phases: &mut Vec<Phase<'b, W>>) {
    if !groups.is_empty() {
        let gs = std::mem::take(groups)
            .into_iter()
            .map(|(src, ops)| SourceGroup { src: VertexId(src), ops })
            .collect();
        phases.push(Phase::Grouped(gs));
    }
}

/// Splits a batch into phases. Every maximal run of vertex operations is a
/// serial phase that completes before the edge operations after it; edge
/// runs are grouped by source (ascending id, batch order within a group).
pub fn group_by_source<W>(batch: &[UpdateOp<W>]) -> Vec<Phase<'_, W>> {
    let mut phases = Vec::new();
    let mut serial = Vec::new();
    let mut groups: Groups<'_, W> = BTreeMap::new();
    for (i, op) in batch.iter().enumerate() {
        match op.source() {
            Some(src) => {
                if !serial.is_empty() {
                    phases.push(Phase::Serial(std::mem::take(&mut serial)));
                }
                groups.entry(src.0).or_default().push((i, op));
            }
            None => {
                flush_groups(&mut groups, &mut phases);
                serial.push((i, op));
            }
        }
    }
    flush_groups(&mut groups, &mut phases);
    if !serial.is_empty() {
        phases.push(Phase::Serial(serial));
    }
    phases
}

/// Outcome of [`batch_update`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateStats {
    /// Operations that completed without error.
    /// `inserted`, `updated` and `removed` count edge effects only.
    pub applied: usize,
    /// Rejected operations with their batch index.
    pub failed: Vec<(usize, GraphError)>,
    pub inserted: usize,
    pub updated: usize,
    pub removed: usize,
    pub elapsed: Duration,
    /// Operations per second.
    pub throughput: f64,
    pub sched: SchedulerStats,
    pub counters: CounterSnapshot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Effect {
    Inserted,
    Updated,
    Removed,
    None,
}

/// Vertex table and block store handed to concurrent group tasks.
struct Shared<'g, W> {
    store: &'g Store<W>,
    recs: *mut VertexRecord,
}

// SAFETY: tasks only dereference `recs` at the index of the source vertex
// they own, and groups have distinct sources within a phase.
unsafe impl<W: Sync> Sync for Shared<'_, W> {}

impl<W: EdgeWeight> Shared<'_, W> {
    /// Applies one group; returns per-op results and whether the first
    /// block of the neighborhood changed.
    async fn run_group(
        &self,
        ctx: &crate::access::TaskCtx,
        group: &SourceGroup<'_, W>,
    ) -> (Vec<(usize, Result<Effect, GraphError>)>, bool) {
        let v = group.src.0;
        // SAFETY: see `Shared`.
        let slot = unsafe { &mut *self.recs.add(v as usize) };
        let mut rec = *slot;
        let mut first_changed = false;
        let mut out = Vec::with_capacity(group.ops.len());
        for &(idx, op) in &group.ops {
            let r = match *op {
                UpdateOp::InsertEdge { dst, prop, .. } => {
                    let loc = locate_gated(self.store, ctx, &rec, dst.0).await;
                    // SAFETY: this task owns every block of `v` in this phase.
                    let (o, changed) = unsafe { self.store.insert_located(v, &mut rec, &loc, EdgeRecord { dst, prop }) };
                    first_changed |= changed;
                    Ok(match o {
                        InsertOutcome::Inserted => Effect::Inserted,
                        InsertOutcome::Updated => Effect::Updated,
                    })
                }
                UpdateOp::DeleteEdge { dst, .. } => {
                    let loc = locate_gated(self.store, ctx, &rec, dst.0).await;
                    // SAFETY: as above.
                    let removed = unsafe { self.store.delete_located(&mut rec, &loc, dst.0) };
                    Ok(if removed { Effect::Removed } else { Effect::None })
                }
                UpdateOp::UpdateEdgeProp { dst, prop, .. } => {
                    let loc = locate_gated(self.store, ctx, &rec, dst.0).await;
                    // SAFETY: as above.
                    let hit = unsafe { self.store.update_located(&loc, dst.0, prop) };
                    Ok(if hit { Effect::Updated } else { Effect::None })
                }
                _ => unreachable!("vertex operations never reach a group"),
            };
            out.push((idx, r));
        }
        *slot = rec;
        (out, first_changed)
    }
}

/// Applies `batch` to `g`. Edge operations are grouped by source vertex;
/// each group runs inside one task, groups are dealt heaviest-first and
/// round-robin over the executor's task slots. The final state equals
/// applying the batch in order, one operation at a time.
pub fn batch_update<W: EdgeWeight>(
    g: &mut CbList<W>,
    batch: &[UpdateOp<W>],
    exec: &Executor,
) -> Result<UpdateStats, EngineError> {
    let start = Instant::now();
    let before = exec.stats();
    let mut stats = UpdateStats::default();
    let tally = |stats: &mut UpdateStats, idx: usize, r: Result<Effect, GraphError>| match r {
        Ok(e) => {
            stats.applied += 1;
            match e {
                Effect::Inserted => stats.inserted += 1,
                Effect::Updated => stats.updated += 1,
                Effect::Removed => stats.removed += 1,
                Effect::None => {}
            }
        }
        Err(err) => stats.failed.push((idx, err)),
    };

    for phase in group_by_source(batch) {
        match phase {
            Phase::Serial(ops) => {
                for (idx, op) in ops {
                    let r = match op {
                        UpdateOp::InsertVertex { ext, prop } => g.insert_vertex(ext, prop.clone()).map(|_| Effect::None),
                        UpdateOp::DeleteVertex { v } => g.delete_vertex(*v).map(|_| Effect::None),
                        UpdateOp::UpdateVertexProp { v, prop } => g.set_vertex_prop(*v, prop.clone()).map(|_| Effect::None),
                        _ => unreachable!("edge operations never reach a serial phase"),
                    };
                    tally(&mut stats, idx, r);
                }
            }
            Phase::Grouped(groups) => {
                let mut runnable = Vec::with_capacity(groups.len());
                for mut group in groups {
                    if !g.is_live(group.src) {
                        for (idx, op) in group.ops {
                            let err = match op {
                                UpdateOp::InsertEdge { dst, .. } if !g.is_live(*dst) => GraphError::UnknownVertex(*dst),
                                _ => GraphError::UnknownVertex(group.src),
                            };
                            tally(&mut stats, idx, Err(err));
                        }
                        continue;
                    }
                    group.ops.retain(|&(idx, op)| match op {
                        UpdateOp::InsertEdge { dst, .. } if !g.is_live(*dst) => {
                            tally(&mut stats, idx, Err(GraphError::UnknownVertex(*dst)));
                            false
                        }
                        _ => true,
                    });
                    if !group.ops.is_empty() {
                        runnable.push(group);
                    }
                }
                // Heaviest first, then deal round-robin.
                runnable.sort_by(|a, b| b.ops.len().cmp(&a.ops.len()).then(a.src.cmp(&b.src)));
                let slots = exec.task_slots();
                let mut per_slot: Vec<Vec<&SourceGroup<'_, W>>> = vec![Vec::new(); slots];
                for (j, grp) in runnable.iter().enumerate() {
                    per_slot[j % slots].push(grp);
                }
                debug_assert!({
                    let mut srcs: Vec<u32> = runnable.iter().map(|g| g.src.0).collect();
                    srcs.sort_unstable();
                    srcs.windows(2).all(|w| w[0] != w[1])
                });

                let shared = Shared {
                    store: &g.store,
                    recs: g.vertices.as_mut_ptr(),
                };
                let results = exec.run(|i, ctx| {
                    let mine = &per_slot[i];
                    let shared = &shared;
                    async move {
                        let mut out = Vec::new();
                        let mut touched = Vec::new();
                        for grp in mine {
                            let (r, changed) = shared.run_group(&ctx, grp).await;
                            out.extend(r);
                            if changed {
                                touched.push(grp.src.0);
                            }
                        }
                        (out, touched)
                    }
                })?;
                let mut touched = Vec::new();
                let mut outcomes = Vec::new();
                for (r, t) in results {
                    outcomes.extend(r);
                    touched.extend(t);
                }
                touched.sort_unstable();
                g.repair_chain(&touched);
                for (idx, r) in outcomes {
                    tally(&mut stats, idx, r);
                }
            }
        }
    }
    stats.failed.sort_by_key(|f| f.0);
    stats.elapsed = start.elapsed();
    stats.throughput = batch.len() as f64 / stats.elapsed.as_secs_f64().max(1e-9);
    let after = exec.stats();
    stats.sched = SchedulerStats {
        tasks: after.sched.tasks - before.sched.tasks,
        resumes: after.sched.resumes - before.sched.resumes,
        rounds: after.sched.rounds - before.sched.rounds,
        suspensions: after.sched.suspensions - before.sched.suspensions,
        solo_suspensions: after.sched.solo_suspensions - before.sched.solo_suspensions,
    };
    stats.counters = CounterSnapshot {
        hints: after.counters.hints - before.counters.hints,
        yields: after.counters.yields - before.counters.yields,
        blocks_visited: after.counters.blocks_visited - before.counters.blocks_visited,
        node_visits: after.counters.node_visits - before.counters.node_visits,
        records_visited: after.counters.records_visited - before.counters.records_visited,
    };
    Ok(stats)
}
