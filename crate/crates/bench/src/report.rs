//! Run reports as JSON lines and CSV rows.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use cbgraph::adapt::SchedulerKind;
use cbgraph::{PrefetchStrategy, StrategyConfig};
use serde::{Deserialize, Serialize};

use crate::counters::{HardwareCounters, SoftwareCounters};
use crate::BenchError;

/// Everything that configures one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: StrategyConfig,
    pub threads: usize,
    /// Update runs only.
    pub batch_size: Option<usize>,
}

impl RunConfig {
    pub fn new(strategy: StrategyConfig, threads: usize) -> Self {
        RunConfig {
            strategy,
            threads,
            batch_size: None,
        }
    }

    /// One thread, one task, no software prefetching, plain polling.
    pub fn baseline() -> Self {
        RunConfig::new(StrategyConfig::sequential(), 1)
    }

    pub fn is_baseline(&self) -> bool {
        let s = &self.strategy;
        self.threads == 1
            && s.prefetch_strategy == PrefetchStrategy::AllHard
            && s.tasks_per_thread == 1
            && s.scheduler == SchedulerKind::Polling
    }
}

/// Short name of the execution mode: `SE` for sequential execution, `IE`
/// for interleaving without software prefetch, `IE+SP` with prefetch on
/// every block, `Hybrid I`/`Hybrid II` for the gated variants.
pub fn mode_label(cfg: &StrategyConfig) -> String {
    match (cfg.prefetch_strategy, cfg.tasks_per_thread) {
        (PrefetchStrategy::AllHard, 1) => "SE".into(),
        (PrefetchStrategy::AllHard, _) => "IE".into(),
        (PrefetchStrategy::AllSoft, 1) => "SP".into(),
        (PrefetchStrategy::AllSoft, _) => "IE+SP".into(),
        (PrefetchStrategy::HybridBlockSize, _) => "Hybrid I".into(),
        (PrefetchStrategy::HybridHotness(k), _) => format!("Hybrid II({k})"),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub workload: String,
    pub dataset: String,
    pub mode: String,
    pub config: RunConfig,
    #[serde(flatten)]
    pub status: RunStatus,
    pub wall_ns: u64,
    /// Operations per second for updates, edges visited per second
    /// otherwise; absent when nothing was timed.
    pub throughput: Option<f64>,
    pub software: SoftwareCounters,
    pub hardware: HardwareCounters,
    /// Hash of the workload output, for cross-configuration diffs.
    pub output_digest: Option<String>,
    /// Order-independent hash of the final graph, update runs only.
    pub checksum: Option<String>,
    /// Workload-specific scalars, such as hit counts or rank extremes.
    pub summary: BTreeMap<String, f64>,
    pub timestamp_ms: u64,
}

impl RunReport {
    pub fn new(workload: &str, dataset: &str, config: RunConfig) -> Self {
        RunReport {
            workload: workload.to_owned(),
            dataset: dataset.to_owned(),
            mode: mode_label(&config.strategy),
            config,
            status: RunStatus::Ok,
            wall_ns: 0,
            throughput: None,
            software: SoftwareCounters::default(),
            hardware: HardwareCounters::unavailable("not captured"),
            output_digest: None,
            checksum: None,
            summary: BTreeMap::new(),
            timestamp_ms: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64),
        }
    }

    pub fn failed(mut self, err: impl ToString) -> Self {
        self.status = RunStatus::Failed { error: err.to_string() };
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    pub fn to_json_line(&self) -> Result<String, BenchError> {
        Ok(serde_json::to_string(self)?)
    }

    pub const CSV_HEADER: &'static str = "workload,dataset,mode,strategy,tasks_per_thread,partitioner,scheduler,threads,batch_size,status,wall_ns,throughput,hints,yields,resumes,suspensions,cache_misses,cache_references,output_digest,checksum,best";

    pub fn to_csv_row(&self, best: bool) -> String {
        let s = &self.config.strategy;
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        let status = match &self.status {
            RunStatus::Ok => "ok".to_owned(),
            RunStatus::Failed { error } => format!("failed: {error}"),
        };
        [
            csv_field(&self.workload),
            csv_field(&self.dataset),
            csv_field(&self.mode),
            s.prefetch_strategy.to_string(),
            s.tasks_per_thread.to_string(),
            format!("{:?}", s.partitioner),
            format!("{:?}", s.scheduler),
            self.config.threads.to_string(),
            self.config.batch_size.map(|b| b.to_string()).unwrap_or_default(),
            csv_field(&status),
            self.wall_ns.to_string(),
            self.throughput.map(|t| format!("{t:.3}")).unwrap_or_default(),
            self.software.hints.to_string(),
            self.software.yields.to_string(),
            self.software.resumes.to_string(),
            self.software.suspensions.to_string(),
            opt(self.hardware.cache_misses),
            opt(self.hardware.cache_references),
            self.output_digest.clone().unwrap_or_default(),
            self.checksum.clone().unwrap_or_default(),
            if best { "*".into() } else { String::new() },
        ]
        .join(",")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Appends one JSON line per report.
pub fn append_jsonl(path: &Path, reports: &[RunReport]) -> Result<(), BenchError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| BenchError::io(path, e))?;
    let mut buf = String::new();
    for r in reports {
        buf.push_str(&r.to_json_line()?);
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| BenchError::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RunReport>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(BenchError::from))
        .collect()
}

/// Writes a CSV table; rows whose index is in `best` are starred.
pub fn write_csv(path: &Path, reports: &[RunReport], best: &[usize]) -> Result<(), BenchError> {
    let mut out = String::from(RunReport::CSV_HEADER);
    out.push('\n');
    for (i, r) in reports.iter().enumerate() {
        out.push_str(&r.to_csv_row(best.contains(&i)));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| BenchError::io(path, e))
}
