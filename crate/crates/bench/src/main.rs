use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cbgraph::adapt::{probe_config, tune, ProbeOptions, ProbeResult};
use cbgraph::{CbListConfig, Graph, PrefetchStrategy, PropertyMode};
use cbgraph_bench::report::{append_jsonl, write_csv};
use cbgraph_bench::{
    execute, load_graph, synthetic_graph, update_stream_driver, LoadOptions, RunConfig, RunReport, StreamParams,
    SweepMatrix, UpdateStream, Workload,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cbgraph", version, about = "Dynamic graph storage benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load an edge list and print load statistics.
    Load {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run one analytics workload.
    Run {
        /// bfs, sssp, pagerank, cc, lp or query.
        workload: String,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        exec: ExecFlags,
        #[command(flatten)]
        params: WorkloadParams,
        /// Dump the workload output as text.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Replay an update stream in batches.
    Update {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        exec: ExecFlags,
        /// JSON-lines stream file; generated from --seed when absent.
        #[arg(long)]
        stream: Option<PathBuf>,
        /// Operations to generate.
        #[arg(long, default_value_t = 10_000)]
        ops: usize,
        /// Save the replayed stream.
        #[arg(long)]
        save_stream: Option<PathBuf>,
    },
    /// Run workloads across a configuration matrix.
    Sweep {
        #[command(flatten)]
        input: Input,
        /// Comma-separated workload names.
        #[arg(long, value_delimiter = ',', default_value = "bfs,pagerank,query")]
        workloads: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "all-hard,all-soft,hybrid-block,hybrid-hot")]
        strategy: Vec<PrefetchStrategy>,
        #[arg(long, value_delimiter = ',', default_value = "1,8")]
        coroutines: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        threads: Vec<usize>,
        #[arg(long = "batch-size", value_delimiter = ',', default_value = "1000")]
        batch_size: Vec<usize>,
        #[command(flatten)]
        params: WorkloadParams,
        #[arg(long)]
        report: Option<PathBuf>,
        /// CSV summary table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Measure memory latencies and write a probe file for --config.
    Probe {
        /// Output path for the probe result.
        #[arg(long)]
        config: PathBuf,
        /// Working set in bytes; defaults to four times the last-level cache.
        #[arg(long)]
        working_set: Option<usize>,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
}

#[derive(Args)]
struct Input {
    /// Edge-list file.
    #[arg(long, conflicts_with = "synthetic")]
    graph: Option<PathBuf>,
    /// Random graph as VERTICES:EDGES.
    #[arg(long)]
    synthetic: Option<String>,
    /// Shuffle seed for loading and seed for synthetic graphs and streams.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    no_shuffle: bool,
    /// Store edge properties in a separate array per block.
    #[arg(long)]
    aoa: bool,
}

#[derive(Args)]
struct ExecFlags {
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Tasks per thread.
    #[arg(long)]
    coroutines: Option<usize>,
    #[arg(long)]
    strategy: Option<PrefetchStrategy>,
    #[arg(long = "batch-size", default_value_t = 1000)]
    batch_size: usize,
    /// Probe file from `cbgraph probe`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Append a JSON-lines report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct WorkloadParams {
    /// Source vertex (external id) for bfs and sssp.
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    damping: Option<f64>,
    /// Share of edges probed by the query workload.
    #[arg(long)]
    fraction: Option<f64>,
}

impl Input {
    fn dataset(&self) -> String {
        match (&self.graph, &self.synthetic) {
            (Some(p), _) => p.display().to_string(),
            (None, Some(s)) => format!("synthetic:{s}"),
            (None, None) => String::new(),
        }
    }

    fn property_mode(&self) -> PropertyMode {
        if self.aoa {
            PropertyMode::Aoa
        } else {
            PropertyMode::Aoe
        }
    }

    fn load(&self) -> Result<Graph> {
        match (&self.graph, &self.synthetic) {
            (Some(path), _) => {
                let opts = LoadOptions {
                    shuffle_seed: (!self.no_shuffle).then_some(self.seed),
                    weight_seed: self.seed,
                    property_mode: self.property_mode(),
                };
                let (g, _) = load_graph(path, &opts).with_context(|| format!("loading {}", path.display()))?;
                Ok(g)
            }
            (None, Some(spec)) => {
                let (v, e) = spec
                    .split_once(':')
                    .context("--synthetic expects VERTICES:EDGES")?;
                let cfg = CbListConfig::default().with_property_mode(self.property_mode());
                Ok(synthetic_graph(v.parse()?, e.parse()?, self.seed, cfg)?)
            }
            (None, None) => bail!("pass --graph <file> or --synthetic V:E"),
        }
    }
}

impl ExecFlags {
    /// Explicit flags win over the probe file; the probe file (or built-in
    /// defaults) fills the rest.
    fn run_config(&self, w: &Workload) -> Result<RunConfig> {
        let probe = match &self.config {
            Some(p) => read_probe(p)?,
            None => ProbeResult::default(),
        };
        let mut strategy = tune(w.task_class(), &probe);
        if let Some(s) = self.strategy {
            strategy.prefetch_strategy = s;
        }
        if let Some(m) = self.coroutines {
            strategy.tasks_per_thread = m;
        }
        Ok(RunConfig {
            strategy,
            threads: self.threads,
            batch_size: w.mutates().then_some(self.batch_size),
        })
    }
}

impl WorkloadParams {
    fn apply(&self, mut w: Workload, seed: u64) -> Workload {
        match &mut w {
            Workload::Bfs { source } | Workload::Sssp { source } => source.clone_from(&self.source),
            Workload::PageRank { damping, iters } => {
                *damping = self.damping.unwrap_or(*damping);
                *iters = self.iters.unwrap_or(*iters);
            }
            Workload::LabelPropagation { iters } => *iters = self.iters.unwrap_or(*iters),
            Workload::EdgeQuery { fraction, seed: s } => {
                *fraction = self.fraction.unwrap_or(*fraction);
                *s = seed;
            }
            Workload::Update { seed: s, .. } => *s = seed,
            Workload::Components => {}
        }
        w
    }
}

fn read_probe(path: &Path) -> Result<ProbeResult> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn emit(report: &RunReport, path: Option<&Path>) -> Result<()> {
    println!("{}", report.to_json_line()?);
    if let Some(p) = path {
        append_jsonl(p, std::slice::from_ref(report))?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Load { input, report } => {
            let path = input.graph.as_ref().context("load needs --graph")?;
            let opts = LoadOptions {
                shuffle_seed: (!input.no_shuffle).then_some(input.seed),
                weight_seed: input.seed,
                property_mode: input.property_mode(),
            };
            let (g, stats) = load_graph(path, &opts)?;
            let audit = g.gtchain_audit();
            let line = serde_json::json!({ "dataset": input.dataset(), "load": stats, "audit": audit });
            println!("{line}");
            if let Some(p) = report {
                let mut text = line.to_string();
                text.push('\n');
                use std::io::Write;
                std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&p)?
                    .write_all(text.as_bytes())?;
            }
        }
        Cmd::Run {
            workload,
            input,
            exec,
            params,
            output,
        } => {
            let w = params.apply(workload.parse()?, input.seed);
            if w.mutates() {
                bail!("use `cbgraph update` for update streams");
            }
            let cfg = exec.run_config(&w)?;
            let mut g = input.load()?;
            let (report, out) = execute(&mut g, &input.dataset(), &w, &cfg);
            emit(&report, exec.report.as_deref())?;
            if let (Some(path), Some(out)) = (output, &out) {
                let mut f = BufWriter::new(File::create(&path)?);
                out.write_text(&g, &mut f)?;
            }
            if !report.is_ok() {
                std::process::exit(1);
            }
        }
        Cmd::Update {
            input,
            exec,
            stream,
            ops,
            save_stream,
        } => {
            let mut g = input.load()?;
            let s = match stream {
                Some(p) => UpdateStream::load(&p)?,
                None => UpdateStream::generate(&StreamParams {
                    ops,
                    vertices: g.vertex_count() as u32,
                    seed: input.seed,
                    ..StreamParams::default()
                }),
            };
            if let Some(p) = save_stream {
                s.save(&p)?;
            }
            let w = Workload::Update { ops: s.len(), seed: input.seed };
            let cfg = exec.run_config(&w)?;
            let report = update_stream_driver(&mut g, &input.dataset(), &s, exec.batch_size, &cfg)?;
            emit(&report, exec.report.as_deref())?;
        }
        Cmd::Sweep {
            input,
            workloads,
            strategy,
            coroutines,
            threads,
            batch_size,
            params,
            report,
            csv,
        } => {
            let ws = workloads
                .iter()
                .map(|n| Ok(params.apply(n.parse()?, input.seed)))
                .collect::<Result<Vec<Workload>>>()?;
            let matrix = SweepMatrix {
                strategies: strategy,
                tasks: coroutines,
                batch_sizes: batch_size,
                threads,
            };
            let build = || input.load().map_err(|e| cbgraph_bench::BenchError::Invalid(format!("{e:#}")));
            let outcome = cbgraph_bench::sweep(&build, &input.dataset(), &ws, &matrix)?;
            let best = outcome.best_indices();
            println!("{}", RunReport::CSV_HEADER);
            for (i, r) in outcome.reports.iter().enumerate() {
                println!("{}", r.to_csv_row(best.contains(&i)));
            }
            if let Some(p) = report {
                append_jsonl(&p, &outcome.reports)?;
            }
            if let Some(p) = csv {
                write_csv(&p, &outcome.reports, &best)?;
            }
        }
        Cmd::Probe {
            config,
            working_set,
            trials,
            seed,
        } => {
            let opts = ProbeOptions {
                working_set_bytes: working_set,
                trials,
                seed,
                ..ProbeOptions::default()
            };
            let result = probe_config(&opts)?;
            let text = serde_json::to_string_pretty(&result)?;
            std::fs::write(&config, &text).with_context(|| format!("writing {}", config.display()))?;
            println!("{text}");
        }
    }
    Ok(())
}
