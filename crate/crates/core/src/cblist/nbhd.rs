//! Edits to one vertex's neighborhood.
//!
//! Every routine here touches only blocks owned by the vertex whose record
//! it receives, plus the shared allocator. Links from the previous vertex's
//! last block into this neighborhood are *not* maintained here; callers
//! repair them when an edit reports that the first block changed.

use smallvec::SmallVec;

use super::block::{BlockKind, BlockRef};
use super::store::Store;
use super::{EdgeRecord, InsertOutcome, VertexRecord};
use crate::EdgeWeight;

/// Internal nodes visited on the way down, with the child index taken.
pub(crate) type Path = SmallVec<[(BlockRef, u16); 8]>;

/// Where an edge with a given destination lives or would live.
pub(crate) struct Located {
    pub path: Path,
    /// Chunk or leaf; `NIL` when the vertex owns no block yet.
    pub target: BlockRef,
}

/// One step of a root-to-leaf descent.
pub(crate) enum Step {
    Leaf,
    Child(usize, BlockRef),
}

impl<W: EdgeWeight> Store<W> {
    #[inline]
    pub(crate) fn step(&self, node: BlockRef, dst: u32) -> Step {
        if self.kind(node) == BlockKind::Internal {
            let inner = self.inner(node);
            let i = inner.route(dst);
            Step::Child(i, inner.child(i))
        } else {
            Step::Leaf
        }
    }

    pub(crate) fn locate(&self, rec: &VertexRecord, dst: u32) -> Located {
        let mut path = Path::new();
        let mut node = rec.query_link;
        if rec.level > 0 {
            while let Step::Child(i, child) = self.step(node, dst) {
                path.push((node, i as u16));
                node = child;
            }
        }
        Located { path, target: node }
    }

    pub(crate) fn find(&self, rec: &VertexRecord, dst: u32) -> Option<EdgeRecord<W>> {
        let loc = self.locate(rec, dst);
        if loc.target.is_nil() {
            return None;
        }
        let recs = self.records(loc.target);
        recs.search(dst).ok().map(|i| recs.get(i))
    }

    /// Inserts or upserts. Returns the outcome and whether the vertex's
    /// first block changed.
    ///
    /// # Safety
    /// The caller has exclusive access to every block owned by `v`.
    pub(crate) unsafe fn insert_located(
        &self,
        v: u32,
        rec: &mut VertexRecord,
        loc: &Located,
        e: EdgeRecord<W>,
    ) -> (InsertOutcome, bool) {
        let target = loc.target;
        if target.is_nil() {
            debug_assert_eq!(rec.level, 0);
            let c = self.alloc(BlockKind::Chunk, v);
            self.records(c).push(e);
            rec.traversal_link = c;
            rec.query_link = c;
            rec.tail = c;
            rec.degree = 1;
            return (InsertOutcome::Inserted, true);
        }
        let mut recs = self.records(target);
        let pos = match recs.search(e.dst.0) {
            Ok(i) => {
                recs.set_prop(i, e.prop);
                return (InsertOutcome::Updated, false);
            }
            Err(i) => i,
        };
        rec.degree += 1;
        if recs.len() < recs.cap() {
            recs.insert(pos, e);
            return (InsertOutcome::Inserted, false);
        }
        if rec.level == 0 {
            self.promote(v, rec, target, pos, e);
            (InsertOutcome::Inserted, true)
        } else {
            self.split_leaf_insert(v, rec, &loc.path, target, pos, e);
            (InsertOutcome::Inserted, false)
        }
    }

    /// Replaces a full chunk with a B+ tree holding its records plus `e`.
    unsafe fn promote(&self, v: u32, rec: &mut VertexRecord, chunk: BlockRef, pos: usize, e: EdgeRecord<W>) {
        let recs = self.records(chunk);
        let mut all: Vec<EdgeRecord<W>> = Vec::with_capacity(recs.len() + 1);
        all.extend(recs.iter());
        all.insert(pos, e);
        let succ = self.next(chunk);
        let tree = self.build_tree(v, &all);
        self.set_next(tree.last_leaf, succ);
        self.free(chunk);
        rec.level = tree.leaves as u32;
        rec.traversal_link = tree.first_leaf;
        rec.tail = tree.last_leaf;
        rec.query_link = tree.root;
    }

    unsafe fn split_leaf_insert(
        &self,
        v: u32,
        rec: &mut VertexRecord,
        path: &Path,
        leaf: BlockRef,
        pos: usize,
        e: EdgeRecord<W>,
    ) {
        let cap = self.leaf_lay.cap;
        let keep = (cap + 1).div_ceil(2);
        let right = self.alloc(BlockKind::Leaf, v);
        let mut lrec = self.records(leaf);
        let mut rrec = self.records(right);
        if pos < keep {
            lrec.move_tail_to(keep - 1, &mut rrec);
            lrec.insert(pos, e);
        } else {
            lrec.move_tail_to(keep, &mut rrec);
            rrec.insert(pos - keep, e);
        }
        self.set_next(right, self.next(leaf));
        self.set_next(leaf, right);
        if rec.tail == leaf {
            rec.tail = right;
        }
        rec.level += 1;

        let mut sep = rrec.key(0);
        let mut new_child = right;
        let fanout = self.fanout;
        let keep = (fanout + 1).div_ceil(2);
        for &(node, ci) in path.iter().rev() {
            let mut inner = self.inner(node);
            let pos = ci as usize + 1;
            if inner.len() < fanout {
                inner.insert(pos, sep, new_child);
                return;
            }
            let sib = self.alloc(BlockKind::Internal, v);
            let mut sin = self.inner(sib);
            if pos < keep {
                inner.move_tail_to(keep - 1, &mut sin);
                inner.insert(pos, sep, new_child);
            } else {
                inner.move_tail_to(keep, &mut sin);
                sin.insert(pos - keep, sep, new_child);
            }
            sep = sin.key(0);
            new_child = sib;
        }
        let old_root = rec.query_link;
        let root = self.alloc(BlockKind::Internal, v);
        let mut r = self.inner(root);
        r.push(self.inner(old_root).key(0), old_root);
        r.push(sep, new_child);
        rec.query_link = root;
    }

    /// Removes the record for `dst` if present.
    ///
    /// # Safety
    /// Same contract as [`Store::insert_located`].
    pub(crate) unsafe fn delete_located(&self, rec: &mut VertexRecord, loc: &Located, dst: u32) -> bool {
        if loc.target.is_nil() {
            return false;
        }
        let mut recs = self.records(loc.target);
        let Ok(i) = recs.search(dst) else {
            return false;
        };
        recs.remove(i);
        rec.degree -= 1;
        if rec.level > 0 {
            self.rebalance_leaf(rec, &loc.path, loc.target);
        }
        true
    }

    /// # Safety
    /// Same contract as [`Store::insert_located`].
    pub(crate) unsafe fn update_located(&self, loc: &Located, dst: u32, prop: W) -> bool {
        if loc.target.is_nil() {
            return false;
        }
        let mut recs = self.records(loc.target);
        match recs.search(dst) {
            Ok(i) => {
                recs.set_prop(i, prop);
                true
            }
            Err(_) => false,
        }
    }

    unsafe fn rebalance_leaf(&self, rec: &mut VertexRecord, path: &Path, leaf: BlockRef) {
        let min = self.min_leaf();
        let depth = path.len() - 1;
        let (parent, ci) = path[depth];
        let ci = ci as usize;
        let mut p = self.inner(parent);
        if self.records(leaf).len() >= min || p.len() == 1 {
            return;
        }
        if ci > 0 {
            let left = p.child(ci - 1);
            let mut lrec = self.records(left);
            if lrec.len() > min {
                let moved = lrec.remove(lrec.len() - 1);
                self.records(leaf).insert(0, moved);
                p.set_key(ci, moved.dst.0);
                return;
            }
            self.merge_leaves(rec, left, leaf);
            p.remove(ci);
        } else {
            let right = p.child(1);
            let mut rrec = self.records(right);
            if rrec.len() > min {
                let moved = rrec.remove(0);
                self.records(leaf).push(moved);
                p.set_key(1, rrec.key(0));
                return;
            }
            self.merge_leaves(rec, leaf, right);
            p.remove(1);
        }
        self.rebalance_inner(rec, path, depth);
    }

    unsafe fn merge_leaves(&self, rec: &mut VertexRecord, left: BlockRef, right: BlockRef) {
        self.records(left).absorb(&mut self.records(right));
        self.set_next(left, self.next(right));
        if rec.tail == right {
            rec.tail = left;
        }
        self.free(right);
        rec.level -= 1;
    }

    /// Restores occupancy from `path[depth]` (which just lost a child) up.
    unsafe fn rebalance_inner(&self, rec: &mut VertexRecord, path: &Path, mut depth: usize) {
        let min = self.min_inner();
        loop {
            let node = path[depth].0;
            let mut n = self.inner(node);
            if depth == 0 {
                if n.len() == 1 {
                    let only = n.child(0);
                    if self.kind(only) == BlockKind::Internal {
                        rec.query_link = only;
                        self.free(node);
                    }
                }
                return;
            }
            if n.len() >= min {
                return;
            }
            let (parent, ni) = path[depth - 1];
            let ni = ni as usize;
            let mut p = self.inner(parent);
            if ni > 0 {
                let left = p.child(ni - 1);
                let mut l = self.inner(left);
                if l.len() > min {
                    let (k, c) = l.remove(l.len() - 1);
                    n.set_key(0, p.key(ni));
                    n.insert(0, k, c);
                    p.set_key(ni, k);
                    return;
                }
                self.merge_inner(left, node, p.key(ni));
                p.remove(ni);
            } else {
                let right = p.child(1);
                let mut r = self.inner(right);
                if r.len() > min {
                    let (_, c) = r.remove(0);
                    n.push(p.key(1), c);
                    p.set_key(1, r.key(0));
                    return;
                }
                self.merge_inner(node, right, p.key(1));
                p.remove(1);
            }
            depth -= 1;
        }
    }

    unsafe fn merge_inner(&self, left: BlockRef, right: BlockRef, sep: u32) {
        let mut l = self.inner(left);
        let r = self.inner(right);
        l.push(sep, r.child(0));
        for j in 1..r.len() {
            l.push(r.key(j), r.child(j));
        }
        self.free(right);
    }
}
