use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

type Oracle = BTreeMap<u32, BTreeMap<u32, u32>>;

fn tiny() -> CbList<u32> {
    CbList::new(CbListConfig::tiny()).unwrap()
}

fn with_vertices(cfg: CbListConfig, n: usize) -> CbList<u32> {
    let mut g = CbList::new(cfg).unwrap();
    for i in 0..n {
        g.insert_vertex(&format!("v{i}"), None).unwrap();
    }
    g
}

fn v(i: u32) -> VertexId {
    VertexId(i)
}

fn dsts(g: &CbList<u32>, x: u32) -> Vec<u32> {
    g.neighbors(v(x)).unwrap().map(|e| e.dst.0).collect()
}

fn assert_matches(g: &CbList<u32>, oracle: &Oracle, n: u32) {
    for x in 0..n {
        let got: Vec<(u32, u32)> = g.neighbors(v(x)).unwrap().map(|e| (e.dst.0, e.prop)).collect();
        let want: Vec<(u32, u32)> = oracle
            .get(&x)
            .map(|m| m.iter().map(|(&d, &w)| (d, w)).collect())
            .unwrap_or_default();
        assert_eq!(got, want, "vertex {x}");
    }
    g.check_invariants().unwrap();
}

#[test]
fn vertex_ids_are_appended() {
    let mut g = tiny();
    assert_eq!(g.insert_vertex("u0", None).unwrap(), v(0));
    assert_eq!(g.insert_vertex("u1", None).unwrap(), v(1));
    assert_eq!(
        g.insert_vertex("u0", None),
        Err(GraphError::DuplicateExternalId("u0".into()))
    );
    assert_eq!(g.ids().external(v(1)), Some("u1"));
    assert_eq!(g.id_of("u1"), Some(v(1)));
}

#[test]
fn deleted_external_id_can_be_rebound() {
    let mut g = tiny();
    g.insert_vertex("a", None).unwrap();
    g.delete_vertex(v(0)).unwrap();
    assert_eq!(g.insert_vertex("a", None).unwrap(), v(1));
    assert_eq!(g.id_of("a"), Some(v(1)));
    assert_eq!(g.live_vertex_count(), 1);
    assert_eq!(g.vertex_count(), 2);
}

#[test]
fn read_vertex_cases() {
    let mut g = with_vertices(CbListConfig::tiny(), 2);
    g.insert_edge(v(0), v(1), 3).unwrap();
    let r = g.read_vertex(v(0)).unwrap();
    assert_eq!((r.degree, r.level, r.deleted), (1, 0, false));
    g.delete_vertex(v(1)).unwrap();
    assert!(g.read_vertex(v(1)).unwrap().deleted);
    assert_eq!(g.read_vertex(v(9)), Err(GraphError::UnknownVertex(v(9))));
}

#[test]
fn delete_vertex_releases_its_blocks() {
    let mut g = with_vertices(CbListConfig::tiny(), 4);
    g.insert_edge(v(0), v(1), 1).unwrap();
    for d in 0..10 {
        let dst = g.insert_vertex(&format!("x{d}"), None).unwrap();
        g.insert_edge(v(2), dst, 1).unwrap();
    }
    assert_eq!(g.read_vertex(v(2)).unwrap().level, 3);
    let before = g.block_count();

    g.delete_vertex(v(3)).unwrap();
    assert_eq!(g.block_count(), before);
    g.delete_vertex(v(0)).unwrap();
    assert_eq!(g.block_count(), before - 1);
    g.delete_vertex(v(2)).unwrap();
    assert_eq!(g.block_count(), before - 4);
    g.check_invariants().unwrap();
    assert_eq!(g.delete_vertex(v(2)), Err(GraphError::UnknownVertex(v(2))));
}

#[test]
fn insert_edge_upserts() {
    let mut g = with_vertices(CbListConfig::tiny(), 3);
    assert_eq!(g.insert_edge(v(0), v(1), 5).unwrap(), InsertOutcome::Inserted);
    let r = g.read_vertex(v(0)).unwrap();
    assert_eq!((r.degree, r.level), (1, 0));
    assert_eq!(g.insert_edge(v(0), v(1), 9).unwrap(), InsertOutcome::Updated);
    assert_eq!(g.read_vertex(v(0)).unwrap().degree, 1);
    assert_eq!(g.get_edge(v(0), v(1)).unwrap().unwrap().prop, 9);
    assert_eq!(g.insert_edge(v(0), v(7), 1), Err(GraphError::UnknownVertex(v(7))));
}

#[test]
fn fifth_neighbor_promotes_to_two_leaves() {
    let mut g = with_vertices(CbListConfig::tiny(), 8);
    assert_eq!((g.chunk_capacity(), g.leaf_capacity()), (4, 4));
    g.insert_edge(v(0), v(7), 1).unwrap();
    for d in 1..=4 {
        g.insert_edge(v(1), v(d), d).unwrap();
    }
    g.insert_edge(v(2), v(0), 1).unwrap();
    let edges_before: Vec<_> = g.chain().flat_map(|b| g.block_records(b)).map(|e| e.dst.0).collect();
    assert_eq!(g.block_count(), 3);

    g.insert_edge(v(1), v(5), 5).unwrap();
    let r = g.read_vertex(v(1)).unwrap();
    assert_eq!(r.level, 2);
    assert_ne!(r.query_link, r.traversal_link);
    assert_eq!(g.block_count(), 4);
    let sizes: Vec<usize> = g
        .chain()
        .filter(|&b| g.block_info(b).owner == v(1))
        .map(|b| g.block_info(b).len)
        .collect();
    assert_eq!(sizes, vec![3, 2]);

    let mut expect = edges_before;
    expect.insert(5, 5);
    let edges_after: Vec<_> = g.chain().flat_map(|b| g.block_records(b)).map(|e| e.dst.0).collect();
    assert_eq!(edges_after, expect);
    g.check_invariants().unwrap();
}

#[test]
fn delete_edge_cases() {
    let mut g = with_vertices(CbListConfig::tiny(), 3);
    g.insert_edge(v(0), v(1), 1).unwrap();
    g.insert_edge(v(0), v(2), 1).unwrap();
    assert!(g.delete_edge(v(0), v(1)).unwrap());
    assert_eq!(g.read_vertex(v(0)).unwrap().degree, 1);
    let audit = g.gtchain_audit();
    assert!(!g.delete_edge(v(0), v(1)).unwrap());
    assert_eq!(g.gtchain_audit(), audit);
    assert_eq!(dsts(&g, 0), vec![2]);
}

#[test]
fn emptied_tree_keeps_one_leaf() {
    let mut g = with_vertices(CbListConfig::tiny(), 10);
    for d in 1..=6 {
        g.insert_edge(v(0), v(d), 1).unwrap();
    }
    assert_eq!(g.read_vertex(v(0)).unwrap().level, 2);
    for d in 1..=6 {
        assert!(g.delete_edge(v(0), v(d)).unwrap());
        g.check_invariants().unwrap();
    }
    let r = g.read_vertex(v(0)).unwrap();
    assert_eq!((r.level, r.degree), (1, 0));
    assert_eq!(g.block_count(), 1);
    assert_eq!(dsts(&g, 0), Vec::<u32>::new());
    g.insert_edge(v(0), v(3), 1).unwrap();
    assert_eq!(dsts(&g, 0), vec![3]);
    g.check_invariants().unwrap();
}

#[test]
fn neighbors_are_sorted() {
    let mut g = with_vertices(CbListConfig::tiny(), 4);
    for d in [3, 1, 2] {
        g.insert_edge(v(0), v(d), 1).unwrap();
    }
    assert_eq!(dsts(&g, 0), vec![1, 2, 3]);
    assert_eq!(dsts(&g, 1), Vec::<u32>::new());
}

#[test]
fn ten_thousand_inserts_into_one_vertex() {
    for cfg in [CbListConfig::tiny(), CbListConfig::default()] {
        let mut g = with_vertices(cfg, 20_000);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut oracle = BTreeSet::new();
        for _ in 0..10_000 {
            let d = rng.random_range(1..20_000u32);
            g.insert_edge(v(0), v(d), d).unwrap();
            oracle.insert(d);
        }
        assert_eq!(dsts(&g, 0), oracle.into_iter().collect::<Vec<_>>());
        g.check_invariants().unwrap();
    }
}

#[test]
fn empty_graph_audit() {
    let g = tiny();
    let a = g.gtchain_audit();
    assert_eq!((a.block_count, a.edge_count, a.ordered), (0, 0, true));
    assert!(a.violation.is_none());
}

#[test]
fn audit_detects_broken_link() {
    let mut g = with_vertices(CbListConfig::tiny(), 3);
    g.insert_edge(v(0), v(1), 1).unwrap();
    g.insert_edge(v(2), v(1), 1).unwrap();
    let first = g.read_vertex(v(0)).unwrap().traversal_link;
    g.store.set_next(first, BlockRef::NIL);
    let a = g.gtchain_audit();
    assert!(!a.ordered);
    assert!(a.violation.is_some());
}

#[test]
fn dangling_edges_are_filtered() {
    let mut g = with_vertices(CbListConfig::tiny(), 3);
    g.insert_edge(v(0), v(1), 1).unwrap();
    g.insert_edge(v(0), v(2), 1).unwrap();
    g.delete_vertex(v(1)).unwrap();
    assert_eq!(dsts(&g, 0), vec![2]);
    assert_eq!(g.get_edge(v(0), v(1)).unwrap(), None);
    assert_eq!(g.read_vertex(v(0)).unwrap().degree, 2);
    assert!(g.delete_edge(v(0), v(1)).unwrap());
    assert_eq!(g.read_vertex(v(0)).unwrap().degree, 1);
}

#[test]
fn promotion_storm_stays_ordered() {
    let n = 200;
    let mut g = with_vertices(CbListConfig::tiny(), n);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut order: Vec<u32> = (0..n as u32).collect();
    rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
    let mut oracle = Oracle::new();
    for round in 0..12 {
        for &s in &order {
            let d = rng.random_range(0..n as u32);
            g.insert_edge(v(s), v(d), round).unwrap();
            oracle.entry(s).or_default().insert(d, round);
        }
    }
    assert!((0..n as u32).all(|x| g.read_vertex(v(x)).unwrap().level >= 1));
    let a = g.gtchain_audit();
    assert!(a.ordered, "{:?}", a.violation);
    assert_eq!(a.edge_count, oracle.values().map(BTreeMap::len).sum::<usize>());
    assert_matches(&g, &oracle, n as u32);
}

#[test]
fn chain_order_equals_neighbor_concatenation() {
    let mut g = with_vertices(CbListConfig::tiny(), 60);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..900 {
        let (s, d) = (rng.random_range(0..60u32), rng.random_range(0..60u32));
        g.insert_edge(v(s), v(d), 1).unwrap();
    }
    for s in [5, 17, 40] {
        g.delete_vertex(v(s)).unwrap();
    }
    let via_neighbors: Vec<(u32, u32)> = g
        .live_vertices()
        .flat_map(|s| g.neighbors(s).unwrap().map(move |e| (s.0, e.dst.0)))
        .collect();
    let via_chain: Vec<(u32, u32)> = g
        .chain()
        .flat_map(|b| {
            let owner = g.block_info(b).owner.0;
            g.block_records(b).into_iter().map(move |e| (owner, e.dst.0))
        })
        .filter(|&(_, d)| g.is_live(v(d)))
        .collect();
    assert_eq!(via_neighbors, via_chain);
}

#[test]
fn property_modes_agree() {
    let mut a = with_vertices(CbListConfig::tiny(), 30);
    let mut b = with_vertices(CbListConfig::tiny().with_property_mode(PropertyMode::Aoa), 30);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..600u32 {
        let (s, d) = (rng.random_range(0..30u32), rng.random_range(0..30u32));
        if i % 4 == 3 {
            assert_eq!(a.delete_edge(v(s), v(d)), b.delete_edge(v(s), v(d)));
        } else {
            assert_eq!(a.insert_edge(v(s), v(d), i), b.insert_edge(v(s), v(d), i));
        }
    }
    for x in 0..30 {
        let ea: Vec<_> = a.neighbors(v(x)).unwrap().collect();
        let eb: Vec<_> = b.neighbors(v(x)).unwrap().collect();
        assert_eq!(ea, eb);
    }
    b.check_invariants().unwrap();
}

#[test]
fn float_weights() {
    let mut g: CbList<f64> = CbList::new(CbListConfig::default()).unwrap();
    g.insert_vertex("a", None).unwrap();
    g.insert_vertex("b", None).unwrap();
    g.insert_edge(v(0), v(1), 2.5).unwrap();
    assert_eq!(g.get_edge(v(0), v(1)).unwrap().unwrap().prop, 2.5);
}

#[test]
fn block_sizes_are_line_multiples() {
    for cfg in [CbListConfig::tiny(), CbListConfig::default()] {
        let g: CbList<u32> = CbList::new(cfg).unwrap();
        let (c, n) = g.block_bytes();
        assert_eq!(c % cfg.cache_line_bytes, 0);
        assert_eq!(n % cfg.cache_line_bytes, 0);
    }
}

#[test]
fn invalid_geometry_is_rejected() {
    let bad = CbListConfig {
        cache_line_bytes: 24,
        ..CbListConfig::default()
    };
    assert!(matches!(CbList::<u32>::new(bad), Err(GraphError::InvalidConfig(_))));
    let small = CbListConfig {
        cache_line_bytes: 16,
        chunk_lines: 1,
        node_lines: 1,
        ..CbListConfig::default()
    };
    assert!(matches!(CbList::<u32>::new(small), Err(GraphError::InvalidConfig(_))));
}

#[test]
fn vertex_props_round_trip() {
    let mut g = tiny();
    g.insert_vertex("a", Some("alpha".into())).unwrap();
    assert_eq!(g.vertex_prop(v(0)).unwrap(), Some("alpha"));
    g.set_vertex_prop(v(0), None).unwrap();
    assert_eq!(g.vertex_prop(v(0)).unwrap(), None);
}

#[derive(Clone, Debug)]
enum Op {
    Insert(u32, u32, u32),
    Delete(u32, u32),
    Update(u32, u32, u32),
    DropVertex(u32),
}

fn op_strategy(n: u32) -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => (0..n, 0..n, 0..100u32).prop_map(|(s, d, w)| Op::Insert(s, d, w)),
        3 => (0..n, 0..n).prop_map(|(s, d)| Op::Delete(s, d)),
        1 => (0..n, 0..n, 0..100u32).prop_map(|(s, d, w)| Op::Update(s, d, w)),
        1 => (0..n).prop_map(Op::DropVertex),
    ]
}

fn run_against_oracle(cfg: CbListConfig, n: u32, ops: &[Op]) {
    let mut g = with_vertices(cfg, n as usize);
    let mut oracle = Oracle::new();
    let mut dead = BTreeSet::new();
    for op in ops {
        match *op {
            Op::Insert(s, d, w) => {
                let r = g.insert_edge(v(s), v(d), w);
                if dead.contains(&s) || dead.contains(&d) {
                    assert!(r.is_err());
                } else {
                    let fresh = oracle.entry(s).or_default().insert(d, w).is_none();
                    let want = if fresh { InsertOutcome::Inserted } else { InsertOutcome::Updated };
                    assert_eq!(r.unwrap(), want);
                }
            }
            Op::Delete(s, d) => {
                let r = g.delete_edge(v(s), v(d));
                if dead.contains(&s) {
                    assert!(r.is_err());
                } else {
                    let had = oracle.get_mut(&s).is_some_and(|m| m.remove(&d).is_some());
                    assert_eq!(r.unwrap(), had);
                }
            }
            Op::Update(s, d, w) => {
                let r = g.update_edge_prop(v(s), v(d), w);
                if dead.contains(&s) {
                    assert!(r.is_err());
                } else {
                    let slot = oracle.get_mut(&s).and_then(|m| m.get_mut(&d));
                    let had = slot.is_some();
                    if let Some(x) = slot {
                        *x = w;
                    }
                    assert_eq!(r.unwrap(), had);
                }
            }
            Op::DropVertex(s) => {
                let r = g.delete_vertex(v(s));
                if dead.insert(s) {
                    r.unwrap();
                    oracle.remove(&s);
                } else {
                    assert!(r.is_err());
                }
            }
        }
    }
    for m in oracle.values_mut() {
        m.retain(|d, _| !dead.contains(d));
    }
    for x in 0..n {
        if dead.contains(&x) {
            assert!(g.neighbors(v(x)).is_err());
            continue;
        }
        let got: Vec<(u32, u32)> = g.neighbors(v(x)).unwrap().map(|e| (e.dst.0, e.prop)).collect();
        let want: Vec<(u32, u32)> = oracle
            .get(&x)
            .map(|m| m.iter().map(|(&d, &w)| (d, w)).collect())
            .unwrap_or_default();
        assert_eq!(got, want, "vertex {x}");
    }
    g.check_invariants().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_ops_match_oracle_tiny(ops in prop::collection::vec(op_strategy(24), 0..600)) {
        run_against_oracle(CbListConfig::tiny(), 24, &ops);
    }

    #[test]
    fn random_ops_match_oracle_aoa(ops in prop::collection::vec(op_strategy(12), 0..400)) {
        run_against_oracle(CbListConfig::tiny().with_property_mode(PropertyMode::Aoa), 12, &ops);
    }

    #[test]
    fn random_ops_match_oracle_default(ops in prop::collection::vec(op_strategy(40), 0..800)) {
        run_against_oracle(CbListConfig::default(), 40, &ops);
    }
}

#[test]
fn long_mixed_workload_matches_oracle() {
    let n = 300u32;
    let mut g = with_vertices(CbListConfig::tiny(), n as usize);
    let mut oracle = Oracle::new();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..40_000u32 {
        let s = rng.random_range(0..n);
        // Skewed destinations drive a few vertices deep into tree territory.
        let d = if rng.random_bool(0.5) { rng.random_range(0..n) } else { rng.random_range(0..n / 10) };
        if rng.random_bool(0.35) {
            let had = oracle.get_mut(&s).is_some_and(|m| m.remove(&d).is_some());
            assert_eq!(g.delete_edge(v(s), v(d)).unwrap(), had);
        } else {
            g.insert_edge(v(s), v(d), i).unwrap();
            oracle.entry(s).or_default().insert(d, i);
        }
        if i % 5000 == 0 {
            g.check_invariants().unwrap();
        }
    }
    assert_matches(&g, &oracle, n);
}
