use serde::{Deserialize, Serialize};

use super::block::{BlockKind, BlockRef};
use super::{CbList, VertexRecord};
use crate::EdgeWeight;

/// Outcome of a full chain walk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Chunks and leaves visited.
    pub block_count: usize,
    /// Records visited (dangling edges included).
    pub edge_count: usize,
    /// True when every grouping, ordering and count check passed.
    pub ordered: bool,
    /// First violated invariant, if any.
    pub violation: Option<String>,
}

impl<W: EdgeWeight> CbList<W> {
    /// Walks the whole traversal chain and cross-checks it against the
    /// vertex table. Violations are reported, never raised.
    pub fn gtchain_audit(&self) -> AuditReport {
        let mut report = AuditReport {
            block_count: 0,
            edge_count: 0,
            ordered: true,
            violation: None,
        };
        let fail = |report: &mut AuditReport, msg: String| {
            if report.violation.is_none() {
                report.ordered = false;
                report.violation = Some(msg);
            }
        };

        let expected_blocks = self.block_count();
        let mut cur = self.chain_head();
        let mut owner: Option<u32> = None;
        let mut owner_blocks = 0usize;
        let mut last_key: Option<u32> = None;
        let mut owners_seen = 0usize;

        let close_owner = |owner: Option<u32>, blocks: usize| -> Option<String> {
            let o = owner?;
            let rec = &self.vertices[o as usize];
            (blocks != rec.chain_blocks()).then(|| {
                format!("vertex {o}: chain holds {blocks} blocks, record implies {}", rec.chain_blocks())
            })
        };

        while !cur.is_nil() {
            if report.block_count > expected_blocks {
                fail(&mut report, "chain longer than the vertex table allows (cycle?)".into());
                break;
            }
            let h = self.store.hdr(cur);
            let o = h.owner();
            let Some(rec) = self.vertices.get(o as usize) else {
                fail(&mut report, format!("block owned by unknown vertex {o}"));
                break;
            };
            if owner != Some(o) {
                if let Some(msg) = close_owner(owner, owner_blocks) {
                    fail(&mut report, msg);
                }
                if owner.is_some_and(|p| p >= o) {
                    fail(&mut report, format!("owner order broken: {} before {o}", owner.unwrap()));
                }
                if rec.deleted {
                    fail(&mut report, format!("deleted vertex {o} still on the chain"));
                }
                if rec.traversal_link != cur {
                    fail(&mut report, format!("vertex {o}: chain enters at {cur:?}, record says {:?}", rec.traversal_link));
                }
                owner = Some(o);
                owner_blocks = 0;
                last_key = None;
                owners_seen += 1;
            }
            let want = if rec.level == 0 { BlockKind::Chunk } else { BlockKind::Leaf };
            if h.kind() != want {
                fail(&mut report, format!("vertex {o}: {:?} block at level {}", h.kind(), rec.level));
            }
            let recs = self.store.records(cur);
            for i in 0..recs.len() {
                let k = recs.key(i);
                if last_key.is_some_and(|p| p >= k) {
                    fail(&mut report, format!("vertex {o}: keys out of order at {k}"));
                }
                last_key = Some(k);
            }
            report.edge_count += recs.len();
            report.block_count += 1;
            owner_blocks += 1;
            cur = h.next();
        }
        if let Some(msg) = close_owner(owner, owner_blocks) {
            fail(&mut report, msg);
        }
        if owners_seen != self.owners.len() {
            fail(&mut report, format!("chain visits {owners_seen} vertices, {} own blocks", self.owners.len()));
        }
        if report.block_count != expected_blocks {
            let msg = format!("chain has {} blocks, vertex table implies {expected_blocks}", report.block_count);
            fail(&mut report, msg);
        }
        let degree_sum = self.edge_count();
        if report.edge_count != degree_sum {
            let msg = format!("chain holds {} records, degrees sum to {degree_sum}", report.edge_count);
            fail(&mut report, msg);
        }
        report
    }

    /// Deep structural check of every neighborhood: level law, B+ balance
    /// and occupancy, separator bounds, leaf chaining, cached tails and
    /// block sizing. Meant for tests; cost is linear in the graph.
    pub fn check_invariants(&self) -> Result<(), String> {
        let line = self.config().cache_line_bytes;
        let (cb, nb) = self.block_bytes();
        if cb % line != 0 || nb % line != 0 {
            return Err(format!("block sizes {cb}/{nb} not multiples of {line}"));
        }
        let audit = self.gtchain_audit();
        if let Some(v) = audit.violation {
            return Err(v);
        }
        let mut live_blocks = 0usize;
        for (v, rec) in self.vertices.iter().enumerate() {
            live_blocks += self.check_vertex(v as u32, rec)?;
        }
        let (chunks, nodes) = self.store.live_blocks();
        if chunks + nodes != live_blocks {
            return Err(format!("{} slots allocated, {live_blocks} reachable (leak)", chunks + nodes));
        }
        Ok(())
    }

    /// Returns the number of slots (chunks and all tree nodes) owned by `v`.
    fn check_vertex(&self, v: u32, rec: &VertexRecord) -> Result<usize, String> {
        if rec.deleted || rec.traversal_link.is_nil() {
            if !(rec.traversal_link.is_nil() && rec.query_link.is_nil() && rec.degree == 0 && rec.level == 0) {
                return Err(format!("vertex {v}: empty or deleted record with storage {rec:?}"));
            }
            return Ok(0);
        }
        if rec.level == 0 {
            if rec.query_link != rec.traversal_link || rec.tail != rec.traversal_link {
                return Err(format!("vertex {v}: level 0 but links differ"));
            }
            if self.store.kind(rec.query_link) != BlockKind::Chunk {
                return Err(format!("vertex {v}: level 0 without a chunk"));
            }
            let n = self.store.records(rec.query_link).len();
            if n != rec.degree as usize {
                return Err(format!("vertex {v}: chunk holds {n}, degree {}", rec.degree));
            }
            return Ok(1);
        }
        if rec.query_link == rec.traversal_link {
            return Err(format!("vertex {v}: tree root equals first leaf"));
        }
        if self.store.kind(rec.query_link) != BlockKind::Internal {
            return Err(format!("vertex {v}: tree root is not an internal node"));
        }
        let mut leaves = Vec::new();
        let mut slots = 0usize;
        let mut leaf_depth = None;
        self.check_node(v, rec.query_link, 0, None, None, true, &mut leaf_depth, &mut leaves, &mut slots)?;
        if leaves.len() != rec.level as usize {
            return Err(format!("vertex {v}: {} leaves, level {}", leaves.len(), rec.level));
        }
        if leaves[0] != rec.traversal_link || *leaves.last().unwrap() != rec.tail {
            return Err(format!("vertex {v}: first/last leaf disagree with record links"));
        }
        for w in leaves.windows(2) {
            if self.store.next(w[0]) != w[1] {
                return Err(format!("vertex {v}: leaf chain skips a leaf"));
            }
        }
        let total: usize = leaves.iter().map(|&l| self.store.records(l).len()).sum();
        if total != rec.degree as usize {
            return Err(format!("vertex {v}: leaves hold {total}, degree {}", rec.degree));
        }
        if leaves.len() > 1 {
            let min = self.store.min_leaf();
            if let Some(&l) = leaves.iter().find(|&&l| self.store.records(l).len() < min) {
                return Err(format!("vertex {v}: leaf {l:?} below minimum occupancy {min}"));
            }
        }
        Ok(slots)
    }

    #[allow(clippy::too_many_arguments)]
    fn check_node(
        &self,
        v: u32,
        node: BlockRef,
        depth: usize,
        lo: Option<u32>,
        hi: Option<u32>,
        is_root: bool,
        leaf_depth: &mut Option<usize>,
        leaves: &mut Vec<BlockRef>,
        slots: &mut usize,
    ) -> Result<(), String> {
        *slots += 1;
        let h = self.store.hdr(node);
        if h.owner() != v {
            return Err(format!("vertex {v}: node {node:?} owned by {}", h.owner()));
        }
        match h.kind() {
            BlockKind::Chunk => Err(format!("vertex {v}: chunk inside a tree")),
            BlockKind::Leaf => {
                if *leaf_depth.get_or_insert(depth) != depth {
                    return Err(format!("vertex {v}: leaves at unequal depth"));
                }
                let recs = self.store.records(node);
                for i in 0..recs.len() {
                    let k = recs.key(i);
                    if lo.is_some_and(|l| k < l) || hi.is_some_and(|h| k >= h) {
                        return Err(format!("vertex {v}: key {k} outside separator range"));
                    }
                }
                leaves.push(node);
                Ok(())
            }
            BlockKind::Internal => {
                let inner = self.store.inner(node);
                let n = inner.len();
                let min = self.store.min_inner();
                if n == 0 || (!is_root && n < min) {
                    return Err(format!("vertex {v}: internal node with {n} children (min {min})"));
                }
                if is_root && n == 1 && self.store.kind(inner.child(0)) == BlockKind::Internal {
                    return Err(format!("vertex {v}: root with a single internal child"));
                }
                for i in 0..n {
                    let clo = if i == 0 { lo } else { Some(inner.key(i)) };
                    let chi = if i + 1 < n { Some(inner.key(i + 1)) } else { hi };
                    if i > 0 && lo.is_some_and(|l| inner.key(i) < l) {
                        return Err(format!("vertex {v}: separator below parent bound"));
                    }
                    if i > 0 && i + 1 < n && inner.key(i) >= inner.key(i + 1) {
                        return Err(format!("vertex {v}: separators not increasing"));
                    }
                    self.check_node(v, inner.child(i), depth + 1, clo, chi, false, leaf_depth, leaves, slots)?;
                }
                Ok(())
            }
        }
    }
}
