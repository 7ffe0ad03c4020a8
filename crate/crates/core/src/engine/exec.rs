//! Worker threads, frontiers and the vertex/edge processing API.

use std::future::Future;
use std::rc::Rc;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::partition::{partition_gtchain, partition_vertex_table, split_even};
use super::task::{build_pool, polling_scheduler, trimmed_polling_scheduler, SchedulerStats};
use crate::access::{get_neighbors_chain, get_neighbors_vertex, CounterSnapshot, SubChain, TaskCtx};
use crate::adapt::{Partitioner, SchedulerKind, StrategyConfig};
use crate::cblist::{CbList, EdgeRecord, VertexId, VertexRecord};
use crate::error::EngineError;
use crate::EdgeWeight;

/// Totals accumulated by an [`Executor`] across runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecStats {
    pub sched: SchedulerStats,
    pub counters: CounterSnapshot,
    pub dense_rounds: u64,
    pub sparse_rounds: u64,
    pub edges_touched: u64,
}

/// Fixed-size bitmap over vertex ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitmap {
    words: Vec<u64>,
    len: usize,
}

impl Bitmap {
    pub fn new(len: usize) -> Self {
        Bitmap {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                (w != 0).then(|| {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    wi * 64 + b
                })
            })
        })
    }
}

/// Set of active live vertices, kept as a sorted id list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frontier {
    universe: usize,
    ids: Vec<u32>,
}

impl Frontier {
    pub fn empty(universe: usize) -> Self {
        Frontier { universe, ids: Vec::new() }
    }

    /// Live vertices among `ids`, deduplicated.
    pub fn from_ids<W: EdgeWeight>(g: &CbList<W>, ids: impl IntoIterator<Item = VertexId>) -> Self {
        let mut ids: Vec<u32> = ids.into_iter().filter(|&v| g.is_live(v)).map(|v| v.0).collect();
        ids.sort_unstable();
        ids.dedup();
        Frontier {
            universe: g.vertex_count(),
            ids,
        }
    }

    pub fn single<W: EdgeWeight>(g: &CbList<W>, v: VertexId) -> Self {
        Frontier::from_ids(g, [v])
    }

    pub fn all<W: EdgeWeight>(g: &CbList<W>) -> Self {
        Frontier {
            universe: g.vertex_count(),
            ids: g.live_vertices().map(|v| v.0).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.position(v).is_some()
    }

    /// Rank of `v` within the sorted list.
    pub fn position(&self, v: VertexId) -> Option<usize> {
        self.ids.binary_search(&v.0).ok()
    }

    pub fn to_bitmap(&self) -> Bitmap {
        let mut b = Bitmap::new(self.universe);
        for &v in &self.ids {
            b.set(v as usize);
        }
        b
    }

    pub fn from_bitmap(b: &Bitmap) -> Self {
        Frontier {
            universe: b.len(),
            ids: b.iter_ones().map(|i| i as u32).collect(),
        }
    }
}

/// Edge-processing mode selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeMode {
    /// Dense when the frontier fraction reaches the configured threshold.
    Auto,
    Dense,
    Sparse,
}

/// Result of one [`Executor::process_edge`] call.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeRound {
    /// Destinations for which the callback returned true.
    pub frontier: Frontier,
    pub dense: bool,
    /// Edges whose source was active.
    pub edges: u64,
}

/// Chain partition keyed by mutation stamp and slot count.
type CachedPlan = (u64, usize, Arc<Vec<SubChain>>);

/// Runs interleaved task pools on worker threads under one strategy.
#[derive(Debug)]
pub struct Executor {
    cfg: StrategyConfig,
    threads: usize,
    stats: Mutex<ExecStats>,
    plan: Mutex<Option<CachedPlan>>,
}

impl Executor {
    pub fn new(cfg: StrategyConfig, threads: usize) -> Result<Self, EngineError> {
        cfg.validate()?;
        if threads == 0 {
            return Err(EngineError::InvalidStrategy("thread count must be at least 1".into()));
        }
        Ok(Executor {
            cfg,
            threads,
            stats: Mutex::new(ExecStats::default()),
            plan: Mutex::new(None),
        })
    }

    /// One thread, one task, hardware prefetching only.
    pub fn sequential() -> Self {
        Executor::new(StrategyConfig::sequential(), 1).expect("sequential config is valid")
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.cfg
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Total task count across threads.
    pub fn task_slots(&self) -> usize {
        self.threads * self.cfg.tasks_per_thread
    }

    pub fn stats(&self) -> ExecStats {
        *self.stats.lock().unwrap()
    }

    pub fn take_stats(&self) -> ExecStats {
        std::mem::take(&mut *self.stats.lock().unwrap())
    }

    pub(crate) fn record(&self, f: impl FnOnce(&mut ExecStats)) {
        f(&mut self.stats.lock().unwrap());
    }

    /// Runs `task_slots()` tasks, `tasks_per_thread` per worker thread.
    /// Task `i` is `make(i, ctx)`; outputs come back in task order.
    pub fn run<Fut, Out, M>(&self, make: M) -> Result<Vec<Out>, EngineError>
    where
        M: Fn(usize, Rc<TaskCtx>) -> Fut + Sync,
        Fut: Future<Output = Out>,
        Out: Send,
    {
        let m = self.cfg.tasks_per_thread;
        let worker = |t: usize| -> Result<(Vec<Out>, SchedulerStats, CounterSnapshot), EngineError> {
            let ctx = Rc::new(TaskCtx::new(self.cfg.prefetch_strategy));
            let mut pool = build_pool(m, &ctx, |i| make(t * m + i, ctx.clone()))?;
            let sched = match self.cfg.scheduler {
                SchedulerKind::Polling => polling_scheduler(&mut pool),
                SchedulerKind::Trimmed => trimmed_polling_scheduler(&mut pool),
            }
            .map_err(|e| match e {
                EngineError::TaskPanicked { index, message } => EngineError::TaskPanicked {
                    index: t * m + index,
                    message,
                },
                e => e,
            })?;
            let counters = ctx.snapshot();
            Ok((pool.into_outputs(), sched, counters))
        };
        let results: Vec<_> = if self.threads == 1 {
            vec![worker(0)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..self.threads).map(|t| s.spawn(move || worker(t))).collect();
                handles
                    .into_iter()
                    .enumerate()
                    .map(|(t, h)| {
                        h.join().unwrap_or_else(|_| {
                            Err(EngineError::TaskPanicked {
                                index: t * m,
                                message: "worker thread panicked".into(),
                            })
                        })
                    })
                    .collect()
            })
        };
        let mut outputs = Vec::with_capacity(self.task_slots());
        let mut stats = ExecStats::default();
        for r in results {
            let (out, sched, counters) = r?;
            outputs.extend(out);
            stats.sched += sched;
            stats.counters += counters;
        }
        self.record(|s| {
            s.sched += stats.sched;
            s.counters += stats.counters;
        });
        Ok(outputs)
    }

    /// Chain partition for `g`, reused until the graph changes.
    pub fn chain_plan<W: EdgeWeight>(&self, g: &CbList<W>) -> Arc<Vec<SubChain>> {
        let slots = self.task_slots();
        let mut plan = self.plan.lock().unwrap();
        if let Some((stamp, n, subs)) = plan.as_ref() {
            if *stamp == g.stamp() && *n == slots {
                return subs.clone();
            }
        }
        let subs = Arc::new(partition_gtchain(g, slots));
        *plan = Some((g.stamp(), slots, subs.clone()));
        subs
    }

    /// Applies `f` to every active live vertex (all live vertices when
    /// `active` is `None`), in parallel over contiguous pieces. Results are
    /// in ascending id order.
    pub fn process_vertex<W, R, F>(&self, g: &CbList<W>, active: Option<&Frontier>, f: F) -> Vec<(VertexId, R)>
    where
        W: EdgeWeight,
        R: Send,
        F: Fn(VertexId, &VertexRecord) -> R + Sync,
    {
        let pieces: Vec<Vec<u32>> = match active {
            Some(fr) => split_even(fr.ids(), self.threads).into_iter().map(<[u32]>::to_vec).collect(),
            None => partition_vertex_table(g.vertex_count(), self.threads)
                .into_iter()
                .map(|r| r.collect())
                .collect(),
        };
        let apply = |piece: &[u32]| -> Vec<(VertexId, R)> {
            piece
                .iter()
                .filter_map(|&i| {
                    let rec = &g.vertices[i as usize];
                    (!rec.deleted).then(|| (VertexId(i), f(VertexId(i), rec)))
                })
                .collect()
        };
        if pieces.len() <= 1 {
            return pieces.first().map(|p| apply(p)).unwrap_or_default();
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = pieces.iter().map(|p| s.spawn(|| apply(p))).collect();
            handles.into_iter().flat_map(|h| h.join().expect("vertex worker panicked")).collect()
        })
    }

    /// One round of edge processing over the out-edges of `active`.
    ///
    /// Sparse mode pushes along each active vertex's neighborhood; dense
    /// mode scans the whole structure (chain segments or vertex ranges per
    /// the partitioner) and skips inactive sources. Callbacks return whether
    /// the destination joins the next frontier; they must be order-insensitive
    /// (atomic min/add style) for both modes to agree.
    pub fn process_edge<W, D, S>(
        &self,
        g: &CbList<W>,
        active: &Frontier,
        dense_f: D,
        sparse_f: S,
        mode: EdgeMode,
    ) -> Result<EdgeRound, EngineError>
    where
        W: EdgeWeight,
        D: Fn(VertexId, EdgeRecord<W>) -> bool + Sync,
        S: Fn(VertexId, EdgeRecord<W>) -> bool + Sync,
    {
        let live = g.live_vertex_count();
        let dense = match mode {
            EdgeMode::Dense => true,
            EdgeMode::Sparse => false,
            EdgeMode::Auto => live > 0 && active.len() as f64 >= self.cfg.dense_threshold * live as f64,
        };
        let parts: Vec<(Vec<u32>, u64)> = if dense {
            let everyone = active.len() == live;
            let bitmap = (!everyone).then(|| active.to_bitmap());
            let is_active = |v: VertexId| bitmap.as_ref().is_none_or(|b| b.get(v.index()));
            match self.cfg.partitioner {
                Partitioner::GtChain => {
                    let subs = self.chain_plan(g);
                    self.run(|i, ctx| {
                        let sub = subs.get(i).copied();
                        let (dense_f, is_active) = (&dense_f, &is_active);
                        async move {
                            let mut out = Vec::new();
                            let mut edges = 0u64;
                            if let Some(sub) = sub {
                                get_neighbors_chain(g, &ctx, sub, |src, e| {
                                    if is_active(src) {
                                        edges += 1;
                                        if dense_f(src, e) {
                                            out.push(e.dst.0);
                                        }
                                    }
                                })
                                .await
                                .expect("partition segments are valid");
                            }
                            (out, edges)
                        }
                    })?
                }
                Partitioner::VertexRange => {
                    let ranges = partition_vertex_table(g.vertex_count(), self.task_slots());
                    self.run(|i, ctx| {
                        let range = ranges.get(i).cloned().unwrap_or(0..0);
                        let (dense_f, is_active) = (&dense_f, &is_active);
                        async move {
                            let mut out = Vec::new();
                            let mut edges = 0u64;
                            for v in range.map(VertexId) {
                                if !g.is_live(v) || !is_active(v) {
                                    continue;
                                }
                                let task = get_neighbors_vertex(g, &ctx, v, |e| {
                                    edges += 1;
                                    if dense_f(v, e) {
                                        out.push(e.dst.0);
                                    }
                                })
                                .expect("vertex is live");
                                task.await;
                            }
                            (out, edges)
                        }
                    })?
                }
            }
        } else {
            let pieces = split_even(active.ids(), self.task_slots());
            self.run(|i, ctx| {
                let piece = pieces[i];
                let sparse_f = &sparse_f;
                async move {
                    let mut out = Vec::new();
                    let mut edges = 0u64;
                    for &v in piece {
                        let v = VertexId(v);
                        let Ok(task) = get_neighbors_vertex(g, &ctx, v, |e| {
                            edges += 1;
                            if sparse_f(v, e) {
                                out.push(e.dst.0);
                            }
                        }) else {
                            continue;
                        };
                        task.await;
                    }
                    (out, edges)
                }
            })?
        };
        let edges = parts.iter().map(|p| p.1).sum();
        let mut next: Vec<u32> = parts.into_iter().flat_map(|p| p.0).collect();
        next.sort_unstable();
        next.dedup();
        self.record(|s| {
            s.edges_touched += edges;
            if dense {
                s.dense_rounds += 1;
            } else {
                s.sparse_rounds += 1;
            }
        });
        Ok(EdgeRound {
            frontier: Frontier {
                universe: g.vertex_count(),
                ids: next,
            },
            dense,
            edges,
        })
    }
}
