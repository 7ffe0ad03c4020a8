//! Analytics workloads on top of the edge-processing API: BFS, SSSP,
//! PageRank, connected components, label propagation, and random edge
//! queries.
//!
//! Every result is independent of prefetch strategy, scheduler, partitioner
//! and thread count: shared state only changes through order-insensitive
//! atomic min/add updates, and sums are accumulated in fixed point.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use num_traits::Float;
use rand::seq::{index, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::access::{find_neighbor, get_neighbors_chain, get_neighbors_vertex};
use crate::adapt::Partitioner;
use crate::cblist::{CbList, EdgeRecord, VertexId};
use crate::engine::{partition_vertex_table, split_even, EdgeMode, Executor, Frontier};
use crate::error::{EngineError, GraphError};
use crate::EdgeWeight;

/// Distance of unreachable or deleted vertices in [`bfs`].
pub const UNREACHED: u32 = u32::MAX;

/// Label of deleted vertices in [`connected_components`] and
/// [`label_propagation`].
pub const NO_LABEL: u32 = u32::MAX;

/// Hop distances from `source`.
pub fn bfs<W: EdgeWeight>(g: &CbList<W>, exec: &Executor, source: VertexId) -> Result<Vec<u32>, EngineError> {
    g.read_vertex(source).and_then(|r| if r.deleted { Err(GraphError::UnknownVertex(source)) } else { Ok(()) })?;
    let dist: Vec<AtomicU32> = (0..g.vertex_count()).map(|_| AtomicU32::new(UNREACHED)).collect();
    dist[source.index()].store(0, Ordering::Relaxed);
    let mut frontier = Frontier::single(g, source);
    let mut level = 0u32;
    while !frontier.is_empty() {
        level += 1;
        let f = |_, e: EdgeRecord<W>| {
            dist[e.dst.index()]
                .compare_exchange(UNREACHED, level, Ordering::Relaxed, Ordering::Relaxed)
                .is_ok()
        };
        frontier = exec.process_edge(g, &frontier, f, f, EdgeMode::Auto)?.frontier;
    }
    Ok(dist.into_iter().map(AtomicU32::into_inner).collect())
}

/// Fails on the first negative weight, in chain order.
pub fn check_non_negative<W: EdgeWeight>(g: &CbList<W>) -> Result<(), GraphError> {
    for s in g.live_vertices() {
        if let Some(e) = g.neighbors(s)?.find(|e| e.prop.is_negative()) {
            return Err(GraphError::NegativeWeight { src: s, dst: e.dst });
        }
    }
    Ok(())
}

/// Shortest-path distances from `source` by frontier relaxation: each round
/// relaxes the out-edges of vertices improved in the previous round, using
/// their distances as of the round start. `None` marks unreachable.
pub fn sssp<W: EdgeWeight>(g: &CbList<W>, exec: &Executor, source: VertexId) -> Result<Vec<Option<W>>, EngineError> {
    g.read_vertex(source).and_then(|r| if r.deleted { Err(GraphError::UnknownVertex(source)) } else { Ok(()) })?;
    check_non_negative(g)?;
    let dist: Vec<AtomicU64> = (0..g.vertex_count()).map(|_| AtomicU64::new(u64::MAX)).collect();
    dist[source.index()].store(W::zero().to_key(), Ordering::Relaxed);
    let mut frontier = Frontier::single(g, source);
    while !frontier.is_empty() {
        let start: Vec<W> = frontier
            .ids()
            .iter()
            .map(|&v| W::from_key(dist[v as usize].load(Ordering::Relaxed)))
            .collect();
        let fr = &frontier;
        let f = |s: VertexId, e: EdgeRecord<W>| {
            let i = fr.position(s).expect("source is active");
            let cand = start[i].saturating_plus(e.prop).to_key();
            dist[e.dst.index()].fetch_min(cand, Ordering::Relaxed) > cand
        };
        frontier = exec.process_edge(g, fr, f, f, EdgeMode::Auto)?.frontier;
    }
    Ok(dist
        .into_iter()
        .map(|d| {
            let k = d.into_inner();
            (k != u64::MAX).then(|| W::from_key(k))
        })
        .collect())
}

const FIXED_ONE: f64 = (1u64 << 62) as f64;

fn live_out_degrees<W: EdgeWeight>(g: &CbList<W>, exec: &Executor) -> Vec<u32> {
    let mut deg = vec![0u32; g.vertex_count()];
    let filter = g.has_deleted();
    for (v, d) in exec.process_vertex(g, None, |v, r| {
        if filter {
            g.neighbors(v).map_or(0, |n| n.count() as u32)
        } else {
            r.degree
        }
    }) {
        deg[v.index()] = d;
    }
    deg
}

/// PageRank by power iteration. Rank mass of vertices without live
/// out-edges is spread uniformly; deleted vertices score zero. Scores of
/// live vertices sum to one.
pub fn pagerank<W: EdgeWeight, F: Float + Send + Sync>(
    g: &CbList<W>,
    exec: &Executor,
    damping: F,
    iters: usize,
) -> Result<Vec<F>, EngineError> {
    let n = g.vertex_count();
    let live = g.live_vertex_count();
    if live == 0 {
        return Ok(vec![F::zero(); n]);
    }
    let d = damping.to_f64().expect("finite damping");
    let deg = live_out_degrees(g, exec);
    let live_ids: Vec<u32> = g.live_vertices().map(|v| v.0).collect();
    let uniform = 1.0 / live as f64;
    let mut rank = vec![0.0f64; n];
    for &v in &live_ids {
        rank[v as usize] = uniform;
    }
    let all = Frontier::all(g);
    let acc: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    for _ in 0..iters {
        let contrib: Vec<u64> = rank
            .iter()
            .zip(&deg)
            .map(|(&r, &k)| if k > 0 { (r / k as f64 * FIXED_ONE).round() as u64 } else { 0 })
            .collect();
        let f = |s: VertexId, e: EdgeRecord<W>| {
            acc[e.dst.index()].fetch_add(contrib[s.index()], Ordering::Relaxed);
            false
        };
        exec.process_edge(g, &all, f, f, EdgeMode::Dense)?;
        let dangling: f64 = live_ids
            .iter()
            .filter(|&&v| deg[v as usize] == 0)
            .map(|&v| rank[v as usize])
            .sum();
        let base = (1.0 - d) * uniform + d * dangling * uniform;
        for &v in &live_ids {
            let a = acc[v as usize].swap(0, Ordering::Relaxed) as f64 / FIXED_ONE;
            rank[v as usize] = base + d * a;
        }
    }
    Ok(rank.into_iter().map(|r| F::from(r).expect("rank fits")).collect())
}

/// Weakly connected components: every live vertex gets the smallest id in
/// its component, treating edges as undirected.
pub fn connected_components<W: EdgeWeight>(g: &CbList<W>, exec: &Executor) -> Result<Vec<u32>, EngineError> {
    let labels: Vec<AtomicU32> = (0..g.vertex_count() as u32)
        .map(|v| AtomicU32::new(if g.is_live(VertexId(v)) { v } else { NO_LABEL }))
        .collect();
    let all = Frontier::all(g);
    loop {
        let changed = AtomicBool::new(false);
        let f = |s: VertexId, e: EdgeRecord<W>| {
            let (ls, ld) = (&labels[s.index()], &labels[e.dst.index()]);
            let m = ls.load(Ordering::Relaxed).min(ld.load(Ordering::Relaxed));
            if ls.fetch_min(m, Ordering::Relaxed) > m || ld.fetch_min(m, Ordering::Relaxed) > m {
                changed.store(true, Ordering::Relaxed);
            }
            false
        };
        exec.process_edge(g, &all, f, f, EdgeMode::Dense)?;
        if !changed.load(Ordering::Relaxed) {
            break;
        }
    }
    Ok(labels.into_iter().map(AtomicU32::into_inner).collect())
}

/// Runs `emit` on every live edge using the executor's partitioner and
/// returns everything emitted, in task order.
fn collect_edges<W, T, E>(g: &CbList<W>, exec: &Executor, emit: E) -> Result<Vec<T>, EngineError>
where
    W: EdgeWeight,
    T: Send,
    E: Fn(VertexId, EdgeRecord<W>, &mut Vec<T>) + Sync,
{
    let emit = &emit;
    let parts: Vec<Vec<T>> = match exec.config().partitioner {
        Partitioner::GtChain => {
            let subs = exec.chain_plan(g);
            exec.run(|i, ctx| {
                let sub = subs.get(i).copied();
                async move {
                    let mut out = Vec::new();
                    if let Some(sub) = sub {
                        get_neighbors_chain(g, &ctx, sub, |s, e| emit(s, e, &mut out))
                            .await
                            .expect("partition segments are valid");
                    }
                    out
                }
            })?
        }
        Partitioner::VertexRange => {
            let ranges = partition_vertex_table(g.vertex_count(), exec.task_slots());
            exec.run(|i, ctx| {
                let range = ranges.get(i).cloned().unwrap_or(0..0);
                async move {
                    let mut out = Vec::new();
                    for v in range.map(VertexId) {
                        if let Ok(task) = get_neighbors_vertex(g, &ctx, v, |e| emit(v, e, &mut out)) {
                            task.await;
                        }
                    }
                    out
                }
            })?
        }
    };
    Ok(parts.into_iter().flatten().collect())
}

/// Synchronous label propagation for `iters` rounds. Each live vertex takes
/// the most frequent label among its in-neighbors and itself; ties go to
/// the smallest label.
pub fn label_propagation<W: EdgeWeight>(g: &CbList<W>, exec: &Executor, iters: usize) -> Result<Vec<u32>, EngineError> {
    let mut labels: Vec<u32> = (0..g.vertex_count() as u32)
        .map(|v| if g.is_live(VertexId(v)) { v } else { NO_LABEL })
        .collect();
    for _ in 0..iters {
        let cur = &labels;
        let mut votes = collect_edges(g, exec, |s, e, out: &mut Vec<(u32, u32)>| {
            out.push((e.dst.0, cur[s.index()]));
        })?;
        votes.extend(g.live_vertices().map(|v| (v.0, labels[v.index()])));
        votes.sort_unstable();
        let mut next = labels.clone();
        for run in votes.chunk_by(|a, b| a.0 == b.0) {
            let mut best = (0usize, NO_LABEL);
            for same in run.chunk_by(|a, b| a.1 == b.1) {
                if same.len() > best.0 {
                    best = (same.len(), same[0].1);
                }
            }
            next[run[0].0 as usize] = best.1;
        }
        labels = next;
    }
    Ok(labels)
}

/// Outcome of [`edge_query_workload`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub issued: usize,
    pub hits: usize,
    pub misses: usize,
    /// Sampled existing edges among the probes.
    pub sampled_edges: usize,
    /// Probe answers in issue order.
    pub answers: Vec<bool>,
    pub elapsed: Duration,
    /// Mean wall time per probe, ns.
    pub latency_ns: f64,
}

/// Builds the probe set: `ceil(fraction * E)` existing edges sampled
/// uniformly plus as many random non-edges, shuffled. Deterministic in
/// `seed`.
pub fn sample_queries<W: EdgeWeight>(g: &CbList<W>, fraction: f64, seed: u64) -> Result<(Vec<(u32, u32)>, usize), GraphError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(GraphError::InvalidConfig(format!("query fraction {fraction} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Edges are addressed by rank in chain order so the edge list is never
    // materialized.
    let filter = g.has_deleted();
    let degrees: Vec<(u32, usize)> = g
        .live_vertices()
        .map(|s| {
            let d = if filter {
                g.neighbors(s).map_or(0, |n| n.count())
            } else {
                g.read_vertex(s).map_or(0, |r| r.degree as usize)
            };
            (s.0, d)
        })
        .collect();
    let total: usize = degrees.iter().map(|d| d.1).sum();
    let k = ((fraction * total as f64).ceil() as usize).min(total);
    let mut picks = index::sample(&mut rng, total, k).into_vec();
    picks.sort_unstable();
    let mut queries: Vec<(u32, u32)> = Vec::with_capacity(2 * k);
    let mut picks = picks.into_iter().peekable();
    let mut base = 0;
    for &(s, d) in &degrees {
        let end = base + d;
        if picks.peek().is_some_and(|&i| i < end) {
            let dsts: Vec<u32> = g.neighbors(VertexId(s))?.map(|e| e.dst.0).collect();
            while let Some(i) = picks.next_if(|&i| i < end) {
                queries.push((s, dsts[i - base]));
            }
        }
        base = end;
    }
    let live: Vec<u32> = g.live_vertices().map(|v| v.0).collect();
    let mut misses = 0;
    let mut attempts = 0usize;
    while misses < k && !live.is_empty() && attempts < 100 * k + 1000 {
        attempts += 1;
        let s = live[rng.random_range(0..live.len())];
        let d = live[rng.random_range(0..live.len())];
        if g.get_edge(VertexId(s), VertexId(d))?.is_none() {
            queries.push((s, d));
            misses += 1;
        }
    }
    queries.shuffle(&mut rng);
    Ok((queries, k))
}

/// Answers `queries` with suspendable point lookups spread over the
/// executor's tasks.
pub fn run_queries<W: EdgeWeight>(g: &CbList<W>, exec: &Executor, queries: &[(u32, u32)]) -> Result<QueryStats, EngineError> {
    let start = Instant::now();
    let pieces = split_even(queries, exec.task_slots());
    let answers: Vec<bool> = exec
        .run(|i, ctx| {
            let piece = pieces[i];
            async move {
                let mut out = Vec::with_capacity(piece.len());
                for &(s, d) in piece {
                    let hit = match find_neighbor(g, &ctx, VertexId(s), VertexId(d)) {
                        Ok(task) => task.await.is_some(),
                        Err(_) => false,
                    };
                    out.push(hit);
                }
                out
            }
        })?
        .into_iter()
        .flatten()
        .collect();
    let elapsed = start.elapsed();
    let hits = answers.iter().filter(|&&h| h).count();
    Ok(QueryStats {
        issued: answers.len(),
        hits,
        misses: answers.len() - hits,
        sampled_edges: 0,
        latency_ns: elapsed.as_nanos() as f64 / answers.len().max(1) as f64,
        answers,
        elapsed,
    })
}

/// Samples and answers a random edge-query workload.
pub fn edge_query_workload<W: EdgeWeight>(
    g: &CbList<W>,
    exec: &Executor,
    fraction: f64,
    seed: u64,
) -> Result<QueryStats, EngineError> {
    let (queries, sampled) = sample_queries(g, fraction, seed)?;
    let mut stats = run_queries(g, exec, &queries)?;
    stats.sampled_edges = sampled;
    Ok(stats)
}
