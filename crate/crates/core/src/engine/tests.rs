use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::access::TaskCtx;
use crate::adapt::{Partitioner, PrefetchStrategy, SchedulerKind, StrategyConfig};
use crate::cblist::{CbList, CbListConfig, VertexId};
use crate::error::{EngineError, GraphError};

fn v(i: u32) -> VertexId {
    VertexId(i)
}

fn ctx() -> Rc<TaskCtx> {
    Rc::new(TaskCtx::new(PrefetchStrategy::AllSoft))
}

/// Pool whose task `i` suspends `ks[i]` times and then returns `i * 10`.
fn pool_of(c: &Rc<TaskCtx>, ks: &[usize]) -> TaskPool<impl std::future::Future<Output = usize>> {
    let ks = ks.to_vec();
    build_pool(ks.len(), c, |i| {
        let c = c.clone();
        let k = ks[i];
        async move {
            for _ in 0..k {
                c.suspend().await;
            }
            i * 10
        }
    })
    .unwrap()
}

fn graph(n: usize) -> CbList<u32> {
    let mut g = CbList::new(CbListConfig::tiny()).unwrap();
    for i in 0..n {
        g.insert_vertex(&i.to_string(), None).unwrap();
    }
    g
}

fn random_graph(n: u32, edges: usize, seed: u64) -> CbList<u32> {
    let mut g = graph(n as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..edges {
        let (s, d) = (rng.random_range(0..n), rng.random_range(0..n));
        g.insert_edge(v(s), v(d), rng.random_range(1..100)).unwrap();
    }
    g
}

type Snapshot = Vec<(u32, Vec<(u32, u32)>)>;

fn snapshot(g: &CbList<u32>) -> Snapshot {
    g.live_vertices()
        .map(|s| (s.0, g.neighbors(s).unwrap().map(|e| (e.dst.0, e.prop)).collect()))
        .collect()
}

fn executors() -> Vec<Executor> {
    vec![
        Executor::sequential(),
        Executor::new(StrategyConfig::default().with_scheduler(SchedulerKind::Trimmed), 1).unwrap(),
        Executor::new(StrategyConfig::default().with_tasks(3), 3).unwrap(),
        Executor::new(
            StrategyConfig::default()
                .with_strategy(PrefetchStrategy::HybridBlockSize)
                .with_partitioner(Partitioner::VertexRange)
                .with_scheduler(SchedulerKind::Trimmed),
            2,
        )
        .unwrap(),
    ]
}

#[test]
fn pools_are_built_lazily() {
    let c = ctx();
    let calls = Cell::new(0);
    let pool = build_pool(8, &c, |i| {
        calls.set(calls.get() + 1);
        async move { i }
    })
    .unwrap();
    assert_eq!(pool.len(), 8);
    assert!(pool.tasks().iter().all(|t| t.resumes() == 0 && !t.is_done()));
    let mut pool = pool;
    polling_scheduler(&mut pool).unwrap();
    assert_eq!(pool.into_outputs(), (0..8).collect::<Vec<_>>());
    assert_eq!(build_pool(1, &c, |_| async {}).unwrap().len(), 1);
    assert_eq!(
        build_pool(0, &c, |_| async {}).err(),
        Some(EngineError::InvalidTaskCount)
    );
}

#[test]
fn polling_resume_counts() {
    let c = ctx();
    let s = polling_scheduler(&mut pool_of(&c, &[2, 2, 2])).unwrap();
    assert_eq!(s.resumes, 9);
    let s = polling_scheduler(&mut pool_of(&c, &[0])).unwrap();
    assert_eq!((s.resumes, s.rounds), (1, 1));
    let s = polling_scheduler(&mut pool_of(&c, &[0, 3])).unwrap();
    assert_eq!(s.resumes, 5);
}

#[test]
fn trimmed_finishes_the_survivor_in_one_resume() {
    let c = ctx();
    let mut pool = pool_of(&c, &[5, 0]);
    let s = trimmed_polling_scheduler(&mut pool).unwrap();
    assert_eq!(s.resumes, 3);
    assert_eq!(s.solo_suspensions, 0);
    assert_eq!(pool.into_outputs(), vec![0, 10]);
    let s = trimmed_polling_scheduler(&mut pool_of(&c, &[7])).unwrap();
    assert_eq!(s.resumes, 1);
}

#[test]
fn panics_name_the_task() {
    let c = ctx();
    let mut pool = build_pool(3, &c, |i| {
        let c = c.clone();
        async move {
            c.suspend().await;
            assert!(i != 2, "task two fails");
        }
    })
    .unwrap();
    match polling_scheduler(&mut pool) {
        Err(EngineError::TaskPanicked { index, message }) => {
            assert_eq!(index, 2);
            assert!(message.contains("task two fails"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn executor_reports_global_task_index_on_panic() {
    let exec = Executor::new(StrategyConfig::default().with_tasks(2), 2).unwrap();
    let r = exec.run(|i, _ctx| async move {
        assert!(i != 3, "boom");
    });
    assert!(matches!(r, Err(EngineError::TaskPanicked { index: 3, .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn scheduler_properties(ks in prop::collection::vec(0usize..12, 1..10)) {
        let c = ctx();
        let mut a = pool_of(&c, &ks);
        let sa = polling_scheduler(&mut a).unwrap();
        prop_assert_eq!(sa.resumes, ks.iter().map(|k| k + 1).sum::<usize>());
        prop_assert_eq!(sa.suspensions, ks.iter().sum::<usize>());
        let mut b = pool_of(&c, &ks);
        let sb = trimmed_polling_scheduler(&mut b).unwrap();
        prop_assert!(sb.resumes <= sa.resumes);
        prop_assert_eq!(sb.solo_suspensions, 0);
        prop_assert_eq!(a.into_outputs(), b.into_outputs());
    }

    #[test]
    fn vertex_partitions_balance(vn in 0usize..5000, n in 1usize..200) {
        let parts = partition_vertex_table(vn, n);
        prop_assert_eq!(parts.len(), n.min(vn));
        let mut next = 0;
        for r in &parts {
            prop_assert_eq!(r.start, next);
            next = r.end;
        }
        prop_assert_eq!(next as usize, vn);
        if let (Some(lo), Some(hi)) = (parts.iter().map(|r| r.len()).min(), parts.iter().map(|r| r.len()).max()) {
            prop_assert!(hi - lo <= 1);
        }
    }
}

#[test]
fn chain_partition_examples() {
    let sizes = |x: usize, n: usize| -> Vec<usize> {
        let mut g = graph(x + 1);
        for s in 0..x as u32 {
            g.insert_edge(v(s), v(x as u32), 1).unwrap();
        }
        assert_eq!(g.block_count(), x);
        partition_gtchain(&g, n).iter().map(|s| s.blocks).collect()
    };
    assert_eq!(sizes(10, 3), vec![4, 3, 3]);
    assert_eq!(sizes(6, 3), vec![2, 2, 2]);
    assert_eq!(sizes(2, 5), vec![1, 1]);
    assert_eq!(sizes(0, 5), Vec::<usize>::new());
}

#[test]
fn vertex_partition_examples() {
    let lens = |vn, n| partition_vertex_table(vn, n).iter().map(|r| r.len()).collect::<Vec<_>>();
    assert_eq!(lens(10, 3), vec![4, 3, 3]);
    assert_eq!(lens(3, 3), vec![1, 1, 1]);
    assert!(lens(0, 3).is_empty());
}

#[test]
fn chain_partitions_cover_the_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let g = random_graph(120, rng.random_range(0..900), seed);
        let all: Vec<_> = g.chain().collect();
        for n in [1, 2, 5, 17, 300] {
            let subs = partition_gtchain(&g, n);
            assert_eq!(subs.len(), n.min(all.len()));
            let mut at = 0;
            for s in &subs {
                assert_eq!(s.start, all[at]);
                at += s.blocks;
                assert_eq!(s.end, all.get(at).copied().unwrap_or(crate::cblist::BlockRef::NIL));
            }
            assert_eq!(at, all.len());
            let lens: Vec<_> = subs.iter().map(|s| s.blocks).collect();
            if let (Some(lo), Some(hi)) = (lens.iter().min(), lens.iter().max()) {
                assert!(hi - lo <= 1);
            }
        }
    }
}

#[test]
fn grouping_examples() {
    let ins = |s, d| UpdateOp::InsertEdge { src: v(s), dst: v(d), prop: 1u32 };
    let batch = vec![ins(1, 2), ins(1, 3), ins(2, 4)];
    let phases = group_by_source(&batch);
    assert_eq!(phases.len(), 1);
    let Phase::Grouped(groups) = &phases[0] else { panic!() };
    let shape: Vec<(u32, Vec<usize>)> = groups.iter().map(|g| (g.src.0, g.ops.iter().map(|o| o.0).collect())).collect();
    assert_eq!(shape, vec![(1, vec![0, 1]), (2, vec![2])]);

    let mut g = graph(3);
    let batch = vec![ins(1, 2), UpdateOp::DeleteEdge { src: v(1), dst: v(2) }];
    let stats = batch_update(&mut g, &batch, &Executor::sequential()).unwrap();
    assert_eq!(stats.applied, 2);
    assert!(g.get_edge(v(1), v(2)).unwrap().is_none());

    let batch = vec![
        UpdateOp::InsertVertex { ext: "new".into(), prop: None },
        ins(3, 0),
        ins(0, 3),
    ];
    let phases = group_by_source(&batch);
    assert!(matches!(phases[0], Phase::Serial(_)));
    let stats = batch_update(&mut g, &batch, &Executor::sequential()).unwrap();
    assert!(stats.failed.is_empty(), "{:?}", stats.failed);
    assert_eq!(g.id_of("new"), Some(v(3)));
    assert!(g.get_edge(v(3), v(0)).unwrap().is_some());
}

#[test]
fn empty_batch() {
    let mut g = graph(3);
    let stats = batch_update(&mut g, &[], &Executor::sequential()).unwrap();
    assert_eq!(stats.applied, 0);
}

fn random_ops(n: u32, count: usize, seed: u64, with_vertex_ops: bool) -> Vec<UpdateOp<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_vertex = n;
    (0..count)
        .map(|i| {
            let s = v(rng.random_range(0..next_vertex));
            let d = v(rng.random_range(0..next_vertex));
            match rng.random_range(0..100) {
                0 if with_vertex_ops => {
                    next_vertex += 1;
                    UpdateOp::InsertVertex { ext: format!("n{i}"), prop: None }
                }
                1 if with_vertex_ops => UpdateOp::DeleteVertex { v: s },
                2 if with_vertex_ops => UpdateOp::UpdateVertexProp { v: s, prop: Some(i.to_string()) },
                3..=30 => UpdateOp::DeleteEdge { src: s, dst: d },
                31..=40 => UpdateOp::UpdateEdgeProp { src: s, dst: d, prop: i as u32 },
                _ => UpdateOp::InsertEdge { src: s, dst: d, prop: i as u32 },
            }
        })
        .collect()
}

/// Applies ops one at a time through the single-operation API.
fn apply_sequentially(g: &mut CbList<u32>, ops: &[UpdateOp<u32>]) -> Vec<(usize, GraphError)> {
    let mut failed = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        let r = match op {
            UpdateOp::InsertEdge { src, dst, prop } => g.insert_edge(*src, *dst, *prop).map(drop),
            UpdateOp::DeleteEdge { src, dst } => g.delete_edge(*src, *dst).map(drop),
            UpdateOp::UpdateEdgeProp { src, dst, prop } => g.update_edge_prop(*src, *dst, *prop).map(drop),
            UpdateOp::InsertVertex { ext, prop } => g.insert_vertex(ext, prop.clone()).map(drop),
            UpdateOp::DeleteVertex { v } => g.delete_vertex(*v),
            UpdateOp::UpdateVertexProp { v, prop } => g.set_vertex_prop(*v, prop.clone()),
        };
        if let Err(e) = r {
            failed.push((i, e));
        }
    }
    failed
}

#[test]
fn ten_thousand_inserts_match_sequential_application() {
    let ops: Vec<_> = {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..10_000)
            .map(|i| UpdateOp::InsertEdge {
                src: v(rng.random_range(0..500)),
                dst: v(rng.random_range(0..500)),
                prop: i,
            })
            .collect()
    };
    let mut oracle = graph(500);
    apply_sequentially(&mut oracle, &ops);
    for exec in executors() {
        let mut g = graph(500);
        let stats = batch_update(&mut g, &ops, &exec).unwrap();
        assert_eq!(stats.applied, 10_000);
        assert_eq!(stats.inserted + stats.updated, 10_000);
        assert_eq!(snapshot(&g), snapshot(&oracle));
        g.check_invariants().unwrap();
    }
}

#[test]
fn mixed_batches_linearize() {
    for seed in 0..6 {
        let ops = random_ops(150, 6000, seed, true);
        let mut oracle = graph(150);
        let want_failed = apply_sequentially(&mut oracle, &ops);
        for exec in executors() {
            for chunk in [7, 500, 6000] {
                let mut g = graph(150);
                let mut failed = Vec::new();
                for (k, part) in ops.chunks(chunk).enumerate() {
                    let stats = batch_update(&mut g, part, &exec).unwrap();
                    failed.extend(stats.failed.into_iter().map(|(i, e)| (i + k * chunk, e)));
                }
                assert_eq!(failed, want_failed);
                assert_eq!(snapshot(&g), snapshot(&oracle));
                g.check_invariants().unwrap();
            }
        }
    }
}

#[test]
fn batch_updates_use_the_trimmed_guard() {
    let exec = Executor::new(StrategyConfig::default().with_scheduler(SchedulerKind::Trimmed), 1).unwrap();
    let mut g = random_graph(50, 2000, 2);
    let ops = random_ops(50, 2000, 9, false);
    let stats = batch_update(&mut g, &ops, &exec).unwrap();
    assert_eq!(stats.sched.solo_suspensions, 0);
    assert!(stats.throughput > 0.0);
}

#[test]
fn process_vertex_cases() {
    let mut g = random_graph(300, 2000, 5);
    g.delete_vertex(v(7)).unwrap();
    for exec in executors() {
        let calls = AtomicUsize::new(0);
        let out = exec.process_vertex(&g, None, |_, _| calls.fetch_add(1, Ordering::Relaxed));
        assert_eq!(out.len(), 299);
        assert_eq!(calls.load(Ordering::Relaxed), 299);
        assert!(out.windows(2).all(|w| w[0].0 < w[1].0));
        let none = exec.process_vertex(&g, Some(&Frontier::empty(300)), |_, _| -> () { panic!("no calls") });
        assert!(none.is_empty());
        let degrees: usize = exec
            .process_vertex(&g, None, |_, r| r.degree as usize)
            .iter()
            .map(|p| p.1)
            .sum();
        assert_eq!(degrees, g.edge_count());
    }
}

#[test]
fn sparse_round_touches_out_degree() {
    let g = random_graph(300, 3000, 6);
    for exec in executors() {
        let f = |_, _| true;
        let round = exec.process_edge(&g, &Frontier::single(&g, v(4)), f, f, EdgeMode::Auto).unwrap();
        assert!(!round.dense);
        assert_eq!(round.edges as usize, g.neighbors(v(4)).unwrap().count());
        let want: Vec<u32> = g.neighbors(v(4)).unwrap().map(|e| e.dst.0).collect();
        assert_eq!(round.frontier.ids(), &want[..]);
    }
}

#[test]
fn dense_and_sparse_agree() {
    let mut g = random_graph(500, 4000, 7);
    g.delete_vertex(v(11)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pick = |e: crate::cblist::EdgeRecord<u32>| e.prop.is_multiple_of(3);
    for exec in executors() {
        for size in [1, 10, 100, 499] {
            let ids: BTreeSet<u32> = (0..size).map(|_| rng.random_range(0..500)).collect();
            let fr = Frontier::from_ids(&g, ids.into_iter().map(v));
            let f = |_, e| pick(e);
            let dense = exec.process_edge(&g, &fr, f, f, EdgeMode::Dense).unwrap();
            let sparse = exec.process_edge(&g, &fr, f, f, EdgeMode::Sparse).unwrap();
            assert!(dense.dense && !sparse.dense);
            assert_eq!(dense.frontier, sparse.frontier);
            assert_eq!(dense.edges, sparse.edges);
        }
    }
}

#[test]
fn full_scan_touches_every_edge_once() {
    let g = random_graph(400, 5000, 9);
    for exec in executors() {
        let counts: Vec<AtomicUsize> = (0..400).map(|_| AtomicUsize::new(0)).collect();
        let f = |s: VertexId, _| {
            counts[s.index()].fetch_add(1, Ordering::Relaxed);
            false
        };
        let round = exec.process_edge(&g, &Frontier::all(&g), f, f, EdgeMode::Auto).unwrap();
        assert!(round.dense);
        assert_eq!(round.edges as usize, g.edge_count());
        for s in 0..400u32 {
            assert_eq!(counts[s as usize].load(Ordering::Relaxed), g.neighbors(v(s)).unwrap().count());
        }
    }
}

#[test]
fn frontier_representations_round_trip() {
    let g = random_graph(200, 10, 1);
    let fr = Frontier::from_ids(&g, [5, 1, 199, 5, 64, 63].map(v));
    assert_eq!(fr.ids(), &[1, 5, 63, 64, 199]);
    let bm = fr.to_bitmap();
    assert_eq!(bm.count(), 5);
    assert_eq!(Frontier::from_bitmap(&bm), fr);
    assert!(fr.contains(v(64)) && !fr.contains(v(2)));
}

#[test]
fn chain_plan_is_cached_until_mutation() {
    let mut g = random_graph(100, 500, 3);
    let exec = Executor::new(StrategyConfig::default(), 2).unwrap();
    let a = exec.chain_plan(&g);
    assert!(std::sync::Arc::ptr_eq(&a, &exec.chain_plan(&g)));
    g.insert_edge(v(0), v(1), 1).unwrap();
    assert!(!std::sync::Arc::ptr_eq(&a, &exec.chain_plan(&g)));
}

#[test]
fn batch_touch_log_has_no_conflicts() {
    let ops = random_ops(40, 3000, 4, false);
    for phase in group_by_source(&ops) {
        if let Phase::Grouped(groups) = phase {
            let mut seen = BTreeMap::new();
            for grp in groups {
                assert!(seen.insert(grp.src, ()).is_none());
                assert!(grp.ops.iter().all(|(_, op)| op.source() == Some(grp.src)));
            }
        }
    }
}
