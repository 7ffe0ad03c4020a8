use std::io::Cursor;

use cbgraph::adapt::{Partitioner, SchedulerKind};
use cbgraph::{CbListConfig, Graph, PrefetchStrategy, StrategyConfig};
use cbgraph_bench::{execute, load_graph_from_reader, run_workload, synthetic_graph, LoadOptions, RunConfig, RunStatus, Workload, WorkloadOutput};

fn cycle3() -> Graph {
    load_graph_from_reader(Cursor::new("0 1 1\n1 2 1\n2 0 1\n"), &LoadOptions::default()).unwrap().0
}

fn configs() -> Vec<RunConfig> {
    let mut out = vec![RunConfig::baseline()];
    for s in PrefetchStrategy::ALL {
        for threads in [1, 2] {
            let cfg = StrategyConfig::default().with_strategy(s).with_tasks(6);
            out.push(RunConfig::new(cfg, threads));
            let cfg = cfg.with_partitioner(Partitioner::VertexRange).with_scheduler(SchedulerKind::Trimmed);
            out.push(RunConfig::new(cfg, threads));
        }
    }
    out
}

#[test]
fn pagerank_on_a_three_cycle() {
    let mut g = cycle3();
    for cfg in configs() {
        let r = run_workload(&mut g, "cycle", &"pagerank".parse().unwrap(), &cfg);
        assert!(r.is_ok());
        assert!((r.summary["rank_min"] - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.summary["rank_max"] - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.summary["rank_sum"] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn outputs_identical_reports_differ() {
    let mut g = synthetic_graph(3000, 30_000, 5, CbListConfig::default()).unwrap();
    for name in ["bfs", "sssp", "pagerank", "cc", "lp", "query"] {
        let w: Workload = name.parse().unwrap();
        let (base, base_out) = execute(&mut g, "syn", &w, &RunConfig::baseline());
        assert!(base.is_ok(), "{name}: {:?}", base.status);
        let soft = RunConfig::new(StrategyConfig::default().with_tasks(8), 1);
        let (other, out) = execute(&mut g, "syn", &w, &soft);
        assert_eq!(out, base_out, "{name}");
        assert_eq!(other.output_digest, base.output_digest);
        assert_ne!(other.mode, base.mode);
        assert_ne!(other.software, base.software, "{name}");
        assert!(other.software.consistent() && base.software.consistent());
    }
}

#[test]
fn query_report_tallies() {
    let mut g = synthetic_graph(1000, 8000, 2, CbListConfig::tiny()).unwrap();
    let r = run_workload(&mut g, "syn", &Workload::EdgeQuery { fraction: 0.05, seed: 3 }, &RunConfig::baseline());
    let s = &r.summary;
    assert_eq!(s["hits"] + s["misses"], s["issued"]);
    assert_eq!(s["hits"], (0.05 * g.edge_count() as f64).ceil());
}

#[test]
fn failures_land_in_the_report() {
    let mut g = cycle3();
    let bad_source = Workload::Bfs { source: Some("nope".into()) };
    let r = run_workload(&mut g, "cycle", &bad_source, &RunConfig::baseline());
    assert!(matches!(r.status, RunStatus::Failed { .. }));
    let bad_fraction = Workload::EdgeQuery { fraction: 2.0, seed: 1 };
    assert!(!run_workload(&mut g, "cycle", &bad_fraction, &RunConfig::baseline()).is_ok());
    let zero_iters = Workload::PageRank { damping: 0.85, iters: 0 };
    assert!(!run_workload(&mut g, "cycle", &zero_iters, &RunConfig::baseline()).is_ok());
    let bad_cfg = RunConfig::new(StrategyConfig::default().with_tasks(0), 1);
    assert!(!run_workload(&mut g, "cycle", &"cc".parse().unwrap(), &bad_cfg).is_ok());
    assert!("triangles".parse::<Workload>().is_err());
}

#[test]
fn text_dump_uses_external_ids() {
    let mut g = load_graph_from_reader(Cursor::new("a b 2\nb c 3\n"), &LoadOptions::default()).unwrap().0;
    let w = Workload::Sssp { source: Some("a".into()) };
    let (_, out) = execute(&mut g, "t", &w, &RunConfig::baseline());
    let out = out.unwrap();
    assert_eq!(out, WorkloadOutput::Distances(vec![Some(0), Some(2), Some(5)]));
    let mut buf = Vec::new();
    out.write_text(&g, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "a 0\nb 2\nc 5\n");
    let (_, bfs) = execute(&mut g, "t", &Workload::Bfs { source: Some("b".into()) }, &RunConfig::baseline());
    let mut buf = Vec::new();
    bfs.unwrap().write_text(&g, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "a inf\nb 0\nc 1\n");
}

#[test]
fn reports_round_trip_through_json() {
    let mut g = cycle3();
    let r = run_workload(&mut g, "cycle", &"bfs".parse().unwrap(), &RunConfig::baseline());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.jsonl");
    cbgraph_bench::report::append_jsonl(&path, std::slice::from_ref(&r)).unwrap();
    cbgraph_bench::report::append_jsonl(&path, std::slice::from_ref(&r)).unwrap();
    let back = cbgraph_bench::report::read_jsonl(&path).unwrap();
    assert_eq!(back, vec![r.clone(), r]);
}
