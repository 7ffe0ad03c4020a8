//! Workload dispatch and per-run measurement.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::Instant;

use cbgraph::adapt::TaskClass;
use cbgraph::algos::{self, NO_LABEL, UNREACHED};
use cbgraph::{Executor, Graph, Rank, VertexId};
use serde::{Deserialize, Serialize};

use crate::counters::{self, SoftwareCounters};
use crate::report::{RunConfig, RunReport};
use crate::stream::{splitmix64, update_stream_driver, StreamParams, UpdateStream};
use crate::BenchError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Workload {
    /// Source by external id; `None` picks the first live vertex.
    Bfs { source: Option<String> },
    Sssp { source: Option<String> },
    PageRank { damping: f64, iters: usize },
    Components,
    LabelPropagation { iters: usize },
    EdgeQuery { fraction: f64, seed: u64 },
    /// A generated update stream of `ops` operations.
    Update { ops: usize, seed: u64 },
}

impl Workload {
    pub const NAMES: [&'static str; 7] = ["bfs", "sssp", "pagerank", "cc", "lp", "query", "update"];

    pub fn name(&self) -> &'static str {
        match self {
            Workload::Bfs { .. } => "bfs",
            Workload::Sssp { .. } => "sssp",
            Workload::PageRank { .. } => "pagerank",
            Workload::Components => "cc",
            Workload::LabelPropagation { .. } => "lp",
            Workload::EdgeQuery { .. } => "query",
            Workload::Update { .. } => "update",
        }
    }

    pub fn task_class(&self) -> TaskClass {
        match self {
            Workload::Bfs { .. } | Workload::Sssp { .. } => TaskClass::Frontier,
            Workload::PageRank { .. } | Workload::Components | Workload::LabelPropagation { .. } => TaskClass::FullScan,
            Workload::EdgeQuery { .. } => TaskClass::PointQuery,
            Workload::Update { .. } => TaskClass::BatchUpdate,
        }
    }

    pub fn mutates(&self) -> bool {
        matches!(self, Workload::Update { .. })
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a workload name with default parameters: PageRank 0.85 for 20
/// iterations, LP 10 iterations, 5% edge queries, 10 000 updates.
impl FromStr for Workload {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "bfs" => Workload::Bfs { source: None },
            "sssp" => Workload::Sssp { source: None },
            "pagerank" | "pr" => Workload::PageRank { damping: 0.85, iters: 20 },
            "cc" => Workload::Components,
            "lp" => Workload::LabelPropagation { iters: 10 },
            "query" => Workload::EdgeQuery { fraction: 0.05, seed: 1 },
            "update" => Workload::Update { ops: 10_000, seed: 1 },
            other => {
                return Err(BenchError::Invalid(format!(
                    "unknown workload `{other}`, expected one of {}",
                    Workload::NAMES.join(", ")
                )))
            }
        })
    }
}

/// Result of one workload, indexed by logical vertex id where applicable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum WorkloadOutput {
    Hops(Vec<u32>),
    Distances(Vec<Option<u32>>),
    Ranks(Vec<Rank>),
    Labels(Vec<u32>),
    Answers(Vec<bool>),
    Checksum(u64),
}

impl WorkloadOutput {
    /// Order-sensitive hash of the full output; equal digests mean
    /// bit-identical outputs up to hash collisions.
    pub fn digest(&self) -> u64 {
        let fold = |tag: u64, vals: &mut dyn Iterator<Item = u64>| vals.fold(splitmix64(tag), |h, x| splitmix64(h ^ x));
        match self {
            WorkloadOutput::Hops(v) => fold(1, &mut v.iter().map(|&x| u64::from(x))),
            WorkloadOutput::Distances(v) => fold(2, &mut v.iter().map(|x| x.map_or(u64::MAX, u64::from))),
            WorkloadOutput::Ranks(v) => fold(3, &mut v.iter().map(|x| x.to_bits())),
            WorkloadOutput::Labels(v) => fold(4, &mut v.iter().map(|&x| u64::from(x))),
            WorkloadOutput::Answers(v) => fold(5, &mut v.iter().map(|&x| u64::from(x))),
            WorkloadOutput::Checksum(c) => fold(6, &mut std::iter::once(*c)),
        }
    }

    /// Text dump, one `external-id value` line per live vertex (one answer
    /// per line for queries).
    pub fn write_text(&self, g: &Graph, out: &mut dyn Write) -> io::Result<()> {
        let ext = |i: usize| g.external_id(VertexId(i as u32)).unwrap_or("?").to_owned();
        let live = |i: usize| g.is_live(VertexId(i as u32));
        match self {
            WorkloadOutput::Hops(v) | WorkloadOutput::Labels(v) => {
                for (i, &x) in v.iter().enumerate().filter(|&(i, _)| live(i)) {
                    if x == u32::MAX {
                        writeln!(out, "{} inf", ext(i))?;
                    } else {
                        writeln!(out, "{} {x}", ext(i))?;
                    }
                }
            }
            WorkloadOutput::Distances(v) => {
                for (i, x) in v.iter().enumerate().filter(|&(i, _)| live(i)) {
                    match x {
                        Some(d) => writeln!(out, "{} {d}", ext(i))?,
                        None => writeln!(out, "{} inf", ext(i))?,
                    }
                }
            }
            WorkloadOutput::Ranks(v) => {
                for (i, x) in v.iter().enumerate().filter(|&(i, _)| live(i)) {
                    writeln!(out, "{} {x:.17e}", ext(i))?;
                }
            }
            WorkloadOutput::Answers(v) => {
                for &a in v {
                    writeln!(out, "{}", u8::from(a))?;
                }
            }
            WorkloadOutput::Checksum(c) => writeln!(out, "{c:016x}")?,
        }
        Ok(())
    }
}

fn resolve(g: &Graph, source: &Option<String>) -> Result<VertexId, BenchError> {
    match source {
        Some(s) => g
            .id_of(s)
            .filter(|&v| g.is_live(v))
            .ok_or_else(|| BenchError::Invalid(format!("unknown source vertex `{s}`"))),
        None => g
            .live_vertices()
            .next()
            .ok_or_else(|| BenchError::Invalid("graph has no vertices".into())),
    }
}

fn summarize(g: &Graph, out: &WorkloadOutput, report: &mut RunReport) {
    let s = &mut report.summary;
    let live: Vec<usize> = g.live_vertices().map(VertexId::index).collect();
    match out {
        WorkloadOutput::Hops(d) => {
            let reached: Vec<u32> = live.iter().map(|&i| d[i]).filter(|&x| x != UNREACHED).collect();
            s.insert("reached".into(), reached.len() as f64);
            s.insert("max_depth".into(), reached.iter().copied().max().unwrap_or(0) as f64);
        }
        WorkloadOutput::Distances(d) => {
            let reached: Vec<u32> = live.iter().filter_map(|&i| d[i]).collect();
            s.insert("reached".into(), reached.len() as f64);
            s.insert("max_distance".into(), reached.iter().copied().max().unwrap_or(0) as f64);
        }
        WorkloadOutput::Ranks(r) => {
            let vals: Vec<f64> = live.iter().map(|&i| r[i]).collect();
            s.insert("rank_sum".into(), vals.iter().sum());
            s.insert("rank_min".into(), vals.iter().copied().fold(f64::INFINITY, f64::min));
            s.insert("rank_max".into(), vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        WorkloadOutput::Labels(l) => {
            let distinct: BTreeSet<u32> = l.iter().copied().filter(|&x| x != NO_LABEL).collect();
            s.insert("distinct_labels".into(), distinct.len() as f64);
        }
        WorkloadOutput::Answers(_) | WorkloadOutput::Checksum(_) => {}
    }
}

/// Runs one workload; errors are recorded in the report, never returned.
/// The output is returned alongside for dumping and diffing.
pub fn execute(g: &mut Graph, dataset: &str, w: &Workload, cfg: &RunConfig) -> (RunReport, Option<WorkloadOutput>) {
    let report = RunReport::new(w.name(), dataset, *cfg);
    match try_execute(g, w, cfg, report.clone()) {
        Ok((r, out)) => (r, Some(out)),
        Err(e) => (report.failed(e), None),
    }
}

pub fn run_workload(g: &mut Graph, dataset: &str, w: &Workload, cfg: &RunConfig) -> RunReport {
    execute(g, dataset, w, cfg).0
}

fn try_execute(
    g: &mut Graph,
    w: &Workload,
    cfg: &RunConfig,
    mut report: RunReport,
) -> Result<(RunReport, WorkloadOutput), BenchError> {
    if let Workload::Update { ops, seed } = *w {
        let stream = UpdateStream::generate(&StreamParams {
            ops,
            vertices: g.vertex_count() as u32,
            seed,
            ..StreamParams::default()
        });
        let batch = cfg.batch_size.unwrap_or(ops.max(1));
        let r = update_stream_driver(g, &report.dataset.clone(), &stream, batch, cfg)?;
        let sum = u64::from_str_radix(r.checksum.as_deref().unwrap_or("0"), 16).unwrap_or(0);
        return Ok((r, WorkloadOutput::Checksum(sum)));
    }
    let exec = Executor::new(cfg.strategy, cfg.threads)?;
    let g: &Graph = g;
    // Probe sampling stays outside the timed region.
    let queries = match w {
        Workload::EdgeQuery { fraction, seed } => Some(algos::sample_queries(g, *fraction, *seed)?.0),
        _ => None,
    };
    let start = Instant::now();
    let (res, hw) = counters::capture(|| -> Result<WorkloadOutput, BenchError> {
        Ok(match w {
            Workload::Bfs { source } => WorkloadOutput::Hops(algos::bfs(g, &exec, resolve(g, source)?)?),
            Workload::Sssp { source } => {
                WorkloadOutput::Distances(algos::sssp(g, &exec, resolve(g, source)?)?)
            }
            Workload::PageRank { damping, iters } => {
                if *iters == 0 {
                    return Err(BenchError::Invalid("pagerank needs at least one iteration".into()));
                }
                WorkloadOutput::Ranks(algos::pagerank(g, &exec, *damping, *iters)?)
            }
            Workload::Components => WorkloadOutput::Labels(algos::connected_components(g, &exec)?),
            Workload::LabelPropagation { iters } => {
                WorkloadOutput::Labels(algos::label_propagation(g, &exec, *iters)?)
            }
            Workload::EdgeQuery { .. } => {
                let q = algos::run_queries(g, &exec, queries.as_deref().unwrap_or_default())?;
                report.summary.insert("issued".into(), q.issued as f64);
                report.summary.insert("hits".into(), q.hits as f64);
                report.summary.insert("misses".into(), q.misses as f64);
                report.summary.insert("ns_per_query".into(), q.latency_ns);
                WorkloadOutput::Answers(q.answers)
            }
            Workload::Update { .. } => unreachable!(),
        })
    });
    let elapsed = start.elapsed();
    let out = res?;
    let stats = exec.take_stats();
    report.wall_ns = elapsed.as_nanos() as u64;
    report.software = SoftwareCounters::from_stats(&stats);
    report.hardware = hw;
    let work = match &out {
        WorkloadOutput::Answers(a) => a.len() as f64,
        _ => stats.edges_touched as f64,
    };
    report.throughput = (work > 0.0).then(|| work / elapsed.as_secs_f64().max(1e-9));
    report.output_digest = Some(format!("{:016x}", out.digest()));
    summarize(g, &out, &mut report);
    Ok((report, out))
}
