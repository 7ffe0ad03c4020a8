use cbgraph::{CbListConfig, StrategyConfig};
use cbgraph_bench::counters::capture;
use cbgraph_bench::{run_workload, synthetic_graph, HardwareCounters, RunConfig};

#[test]
fn software_counters_are_consistent() {
    let mut g = synthetic_graph(2000, 20_000, 1, CbListConfig::tiny()).unwrap();
    for name in ["bfs", "pagerank", "query", "update"] {
        let cfg = RunConfig::new(StrategyConfig::default().with_tasks(8), 1);
        let r = run_workload(&mut g, "syn", &name.parse().unwrap(), &cfg);
        assert!(r.is_ok(), "{name}");
        let s = r.software;
        assert!(s.consistent(), "{name}: {s:?}");
        assert!(s.resumes >= s.yields);
    }
}

#[test]
fn hardware_counters_degrade_gracefully() {
    let (v, hw) = capture(|| (0..1_000_000u64).sum::<u64>());
    assert_eq!(v, 499_999_500_000);
    if hw.available {
        assert!(hw.cache_misses.is_some() && hw.cache_references.is_some());
        assert!(hw.reason.is_none());
    } else {
        assert_eq!(hw.cache_misses, None);
        assert!(hw.reason.is_some());
    }
    let u = HardwareCounters::unavailable("test");
    assert!(!u.available && u.reason.as_deref() == Some("test"));
}
