//! Configuration sweeps over strategies, interleaving degree, batch sizes
//! and thread counts.

use cbgraph::adapt::{tune, ProbeResult, SchedulerKind};
use cbgraph::{Graph, PrefetchStrategy, StrategyConfig};
use serde::{Deserialize, Serialize};

use crate::report::{RunConfig, RunReport};
use crate::workload::{run_workload, Workload};
use crate::BenchError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMatrix {
    pub strategies: Vec<PrefetchStrategy>,
    /// Tasks per thread.
    pub tasks: Vec<usize>,
    /// Used by update workloads only.
    pub batch_sizes: Vec<usize>,
    pub threads: Vec<usize>,
}

impl Default for SweepMatrix {
    fn default() -> Self {
        SweepMatrix {
            strategies: PrefetchStrategy::ALL.to_vec(),
            tasks: vec![1, 8],
            batch_sizes: vec![1000],
            threads: vec![1],
        }
    }
}

impl SweepMatrix {
    /// Run configurations for `w`: the cross product, with the sequential
    /// baseline prepended when the product lacks it. Partitioner and
    /// scheduler follow the workload class; single-task cells use polling.
    pub fn cells(&self, w: &Workload) -> Vec<RunConfig> {
        let paired = tune(w.task_class(), &ProbeResult::default());
        let batches: Vec<Option<usize>> = if w.mutates() {
            self.batch_sizes.iter().map(|&b| Some(b)).collect()
        } else {
            vec![None]
        };
        let mut out = Vec::new();
        for &threads in &self.threads {
            for &s in &self.strategies {
                for &m in &self.tasks {
                    for &batch_size in &batches {
                        let strategy = StrategyConfig {
                            prefetch_strategy: s,
                            tasks_per_thread: m,
                            partitioner: paired.partitioner,
                            scheduler: if m == 1 { SchedulerKind::Polling } else { paired.scheduler },
                            dense_threshold: paired.dense_threshold,
                        };
                        out.push(RunConfig {
                            strategy,
                            threads,
                            batch_size,
                        });
                    }
                }
            }
        }
        if !out.iter().any(RunConfig::is_baseline) {
            let mut base = RunConfig::baseline();
            base.strategy.partitioner = paired.partitioner;
            base.batch_size = batches[0];
            out.insert(0, base);
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub reports: Vec<RunReport>,
    /// Per workload, the index into `reports` with the least wall time
    /// among successful runs.
    pub best: Vec<(String, usize)>,
}

impl SweepOutcome {
    pub fn best_indices(&self) -> Vec<usize> {
        self.best.iter().map(|b| b.1).collect()
    }

    /// The baseline report for `workload`, if it ran.
    pub fn baseline(&self, workload: &str) -> Option<&RunReport> {
        self.reports
            .iter()
            .find(|r| r.workload == workload && r.config.is_baseline())
    }
}

/// Runs every workload under every cell of `matrix`. Read-only workloads
/// share one graph; each update cell gets a fresh graph from `build`.
/// Failed cells are kept as failed reports.
pub fn sweep(
    build: &dyn Fn() -> Result<Graph, BenchError>,
    dataset: &str,
    workloads: &[Workload],
    matrix: &SweepMatrix,
) -> Result<SweepOutcome, BenchError> {
    if matrix.strategies.is_empty() || matrix.tasks.is_empty() || matrix.threads.is_empty() {
        return Err(BenchError::Invalid("sweep matrix has an empty axis".into()));
    }
    if workloads.iter().any(Workload::mutates) && matrix.batch_sizes.is_empty() {
        return Err(BenchError::Invalid("update sweeps need at least one batch size".into()));
    }
    let mut shared: Option<Graph> = None;
    let mut outcome = SweepOutcome::default();
    for w in workloads {
        let first = outcome.reports.len();
        for cfg in matrix.cells(w) {
            let report = if w.mutates() {
                match build() {
                    Ok(mut g) => run_workload(&mut g, dataset, w, &cfg),
                    Err(e) => RunReport::new(w.name(), dataset, cfg).failed(e),
                }
            } else {
                if shared.is_none() {
                    shared = Some(build()?);
                }
                run_workload(shared.as_mut().expect("built"), dataset, w, &cfg)
            };
            outcome.reports.push(report);
        }
        let best = (first..outcome.reports.len())
            .filter(|&i| outcome.reports[i].is_ok())
            .min_by_key(|&i| outcome.reports[i].wall_ns);
        if let Some(i) = best {
            outcome.best.push((w.name().to_owned(), i));
        }
    }
    Ok(outcome)
}
