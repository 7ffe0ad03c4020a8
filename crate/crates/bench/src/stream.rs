//! Update streams and their replay in batches.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use cbgraph::engine::{batch_update, UpdateOp};
use cbgraph::{EdgeWeight, Executor, Graph, VertexId};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::counters::{self, SoftwareCounters};
use crate::load::{MAX_WEIGHT, MIN_WEIGHT};
use crate::report::{RunConfig, RunReport};
use crate::BenchError;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Order-independent hash of every live `(src, dst, weight)` triple plus
/// the edge count. Two graphs with equal edge sets and weights hash equal
/// no matter how they were built.
pub fn graph_checksum<W: EdgeWeight>(g: &cbgraph::CbList<W>) -> u64 {
    let mut sum = 0u64;
    let mut count = 0u64;
    for s in g.live_vertices() {
        for e in g.neighbors(s).expect("live vertex") {
            let h = splitmix64(splitmix64(splitmix64(u64::from(s.0)) ^ u64::from(e.dst.0)) ^ e.prop.to_bits64());
            sum = sum.wrapping_add(h);
            count += 1;
        }
    }
    splitmix64(sum ^ splitmix64(count))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamParams {
    pub ops: usize,
    /// Endpoints are drawn from `0..vertices`.
    pub vertices: u32,
    /// Share of insertions; the remainder splits evenly between deletions
    /// and weight updates of previously inserted edges.
    pub insert_ratio: f64,
    pub seed: u64,
}

impl Default for StreamParams {
    fn default() -> Self {
        StreamParams {
            ops: 10_000,
            vertices: 1000,
            insert_ratio: 0.7,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TimedOp {
    ts: u64,
    op: UpdateOp<u32>,
}

/// Timestamped edge updates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateStream {
    pub timestamps: Vec<u64>,
    pub ops: Vec<UpdateOp<u32>>,
}

impl UpdateStream {
    /// Deterministic in `params`. Deletions and updates target edges this
    /// stream inserted earlier.
    pub fn generate(p: &StreamParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut inserted: Vec<(u32, u32)> = Vec::new();
        let mut s = UpdateStream::default();
        if p.vertices == 0 {
            return s;
        }
        for ts in 0..p.ops as u64 {
            let roll: f64 = rng.random();
            let op = if inserted.is_empty() || roll < p.insert_ratio {
                let (src, dst) = (rng.random_range(0..p.vertices), rng.random_range(0..p.vertices));
                inserted.push((src, dst));
                UpdateOp::InsertEdge {
                    src: VertexId(src),
                    dst: VertexId(dst),
                    prop: rng.random_range(MIN_WEIGHT..=MAX_WEIGHT),
                }
            } else {
                let (src, dst) = inserted[rng.random_range(0..inserted.len())];
                let (src, dst) = (VertexId(src), VertexId(dst));
                if roll < p.insert_ratio + (1.0 - p.insert_ratio) / 2.0 {
                    UpdateOp::DeleteEdge { src, dst }
                } else {
                    UpdateOp::UpdateEdgeProp {
                        src,
                        dst,
                        prop: rng.random_range(MIN_WEIGHT..=MAX_WEIGHT),
                    }
                }
            };
            s.timestamps.push(ts);
            s.ops.push(op);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Reads JSON lines of `{"ts": .., "op": ..}`, sorted by timestamp
    /// (stable for equal stamps).
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let f = File::open(path).map_err(|e| BenchError::io(path, e))?;
        let mut ops: Vec<TimedOp> = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| BenchError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let op = serde_json::from_str(&line).map_err(|e| BenchError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            ops.push(op);
        }
        ops.sort_by_key(|t| t.ts);
        Ok(UpdateStream {
            timestamps: ops.iter().map(|t| t.ts).collect(),
            ops: ops.into_iter().map(|t| t.op).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), BenchError> {
        let f = File::create(path).map_err(|e| BenchError::io(path, e))?;
        let mut w = BufWriter::new(f);
        for (&ts, op) in self.timestamps.iter().zip(&self.ops) {
            let line = serde_json::to_string(&TimedOp { ts, op: op.clone() })?;
            writeln!(w, "{line}").map_err(|e| BenchError::io(path, e))?;
        }
        w.flush().map_err(|e| BenchError::io(path, e))
    }
}

/// Applies `stream` in consecutive batches of `batch_size` and reports
/// update throughput and the final graph checksum.
pub fn update_stream_driver(
    g: &mut Graph,
    dataset: &str,
    stream: &UpdateStream,
    batch_size: usize,
    cfg: &RunConfig,
) -> Result<RunReport, BenchError> {
    if batch_size == 0 {
        return Err(BenchError::Invalid("batch size must be at least 1".into()));
    }
    let mut cfg = *cfg;
    cfg.batch_size = Some(batch_size);
    let exec = Executor::new(cfg.strategy, cfg.threads)?;
    let mut report = RunReport::new("update", dataset, cfg);
    let mut elapsed = Duration::ZERO;
    let (mut batches, mut applied, mut failed) = (0usize, 0usize, 0usize);
    let (mut inserted, mut updated, mut removed) = (0usize, 0usize, 0usize);
    let (res, hw) = counters::capture(|| -> Result<(), BenchError> {
        for chunk in stream.ops.chunks(batch_size) {
            let s = batch_update(g, chunk, &exec)?;
            elapsed += s.elapsed;
            batches += 1;
            applied += s.applied;
            failed += s.failed.len();
            inserted += s.inserted;
            updated += s.updated;
            removed += s.removed;
        }
        Ok(())
    });
    res?;
    report.wall_ns = elapsed.as_nanos() as u64;
    report.throughput = Some(stream.len() as f64 / elapsed.as_secs_f64().max(1e-9));
    report.software = SoftwareCounters::from_stats(&exec.take_stats());
    report.hardware = hw;
    let sum = graph_checksum(g);
    report.checksum = Some(format!("{sum:016x}"));
    for (k, v) in [
        ("batches", batches),
        ("applied", applied),
        ("failed", failed),
        ("inserted", inserted),
        ("updated", updated),
        ("removed", removed),
        ("edges", g.edge_count()),
    ] {
        report.summary.insert(k.into(), v as f64);
    }
    Ok(report)
}
