//! The CBList structure: vertex table, ID map, per-vertex chunk/B+ tree
//! edge storage, and the global traversal chain (GTChain).
//!
//! A vertex with `level == 0` keeps its out-edges in one small chunk; once
//! the chunk overflows, the records move into a B+ tree and `level` counts
//! the tree's leaves. Chunks and leaves of all vertices are linked, in
//! logical-ID order, into one singly-linked chain starting at
//! [`CbList::chain_head`].

mod arena;
mod audit;
mod block;
pub(crate) mod nbhd;
pub(crate) mod store;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

pub use audit::AuditReport;
pub use block::{BlockKind, BlockRef, PropertyMode};
pub(crate) use nbhd::Located;
pub(crate) use store::Store;

use crate::error::GraphError;
use crate::EdgeWeight;

/// Dense logical vertex identifier (index into the vertex table).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default, Serialize, Deserialize)]
#[repr(transparent)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for VertexId {
    fn from(x: u32) -> Self {
        VertexId(x)
    }
}

/// One out-edge: destination plus property.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct EdgeRecord<W> {
    pub dst: VertexId,
    pub prop: W,
}

/// Vertex-table entry.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct VertexRecord {
    /// First chunk or leaf of the neighborhood; entry point onto the chain.
    pub traversal_link: BlockRef,
    /// The chunk, or the B+ root.
    pub query_link: BlockRef,
    pub degree: u32,
    pub deleted: bool,
    /// 0 for chunk storage, otherwise the number of B+ leaves.
    pub level: u32,
    pub(crate) tail: BlockRef,
}

impl VertexRecord {
    const EMPTY: VertexRecord = VertexRecord {
        traversal_link: BlockRef::NIL,
        query_link: BlockRef::NIL,
        degree: 0,
        deleted: false,
        level: 0,
        tail: BlockRef::NIL,
    };

    /// Number of chain blocks this vertex owns.
    #[inline]
    pub fn chain_blocks(&self) -> usize {
        if self.traversal_link.is_nil() {
            0
        } else {
            self.level.max(1) as usize
        }
    }

    /// Last chunk or leaf of the neighborhood.
    pub fn tail_link(&self) -> BlockRef {
        self.tail
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum InsertOutcome {
    Inserted,
    Updated,
}

/// Geometry and layout of a [`CbList`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CbListConfig {
    pub cache_line_bytes: usize,
    /// Small chunk size in cache lines.
    pub chunk_lines: usize,
    /// B+ node size in cache lines.
    pub node_lines: usize,
    pub property_mode: PropertyMode,
}

impl Default for CbListConfig {
    fn default() -> Self {
        CbListConfig {
            cache_line_bytes: 64,
            chunk_lines: 4,
            node_lines: 4,
            property_mode: PropertyMode::Aoe,
        }
    }
}

impl CbListConfig {
    /// 48-byte blocks: four `u32`-weighted records per chunk and leaf,
    /// fanout 4. Handy for exercising promotions and splits.
    pub fn tiny() -> Self {
        CbListConfig {
            cache_line_bytes: 16,
            chunk_lines: 3,
            node_lines: 3,
            property_mode: PropertyMode::Aoe,
        }
    }

    pub fn with_property_mode(mut self, mode: PropertyMode) -> Self {
        self.property_mode = mode;
        self
    }
}

/// External id ↔ logical id.
#[derive(Default, Debug, Clone)]
pub struct IdMap {
    forward: HashMap<String, VertexId>,
    reverse: Vec<String>,
}

impl IdMap {
    pub fn get(&self, ext: &str) -> Option<VertexId> {
        self.forward.get(ext).copied()
    }

    pub fn external(&self, v: VertexId) -> Option<&str> {
        self.reverse.get(v.index()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.reverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverse.is_empty()
    }
}

/// The prefetch-aware dynamic graph structure. See the module docs.
pub struct CbList<W: EdgeWeight> {
    cfg: CbListConfig,
    pub(crate) store: Store<W>,
    pub(crate) vertices: Vec<VertexRecord>,
    vertex_props: Vec<Option<String>>,
    ids: IdMap,
    head: BlockRef,
    /// Vertices owning at least one chain block.
    owners: BTreeSet<u32>,
    live: usize,
    stamp: u64,
}

fn next_stamp() -> u64 {
    static NEXT: AtomicU64 = AtomicU64::new(1);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

impl<W: EdgeWeight> CbList<W> {
    pub fn new(cfg: CbListConfig) -> Result<Self, GraphError> {
        Ok(CbList {
            store: Store::new(&cfg)?,
            cfg,
            vertices: Vec::new(),
            vertex_props: Vec::new(),
            ids: IdMap::default(),
            head: BlockRef::NIL,
            owners: BTreeSet::new(),
            live: 0,
            stamp: next_stamp(),
        })
    }

    pub fn config(&self) -> &CbListConfig {
        &self.cfg
    }

    /// Records per small chunk.
    pub fn chunk_capacity(&self) -> usize {
        self.store.chunk_lay.cap
    }

    /// Records per B+ leaf.
    pub fn leaf_capacity(&self) -> usize {
        self.store.leaf_lay.cap
    }

    /// Children per internal B+ node.
    pub fn fanout(&self) -> usize {
        self.store.fanout
    }

    /// Allocated bytes of a chunk and of a tree node.
    pub fn block_bytes(&self) -> (usize, usize) {
        (self.store.chunk_bytes(), self.store.node_bytes())
    }

    /// Length of the vertex table, deleted entries included.
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn live_vertex_count(&self) -> usize {
        self.live
    }

    /// Sum of degrees over live vertices.
    pub fn edge_count(&self) -> usize {
        self.vertices.iter().map(|r| r.degree as usize).sum()
    }

    /// Number of chunks and leaves on the chain.
    pub fn block_count(&self) -> usize {
        self.vertices.iter().map(VertexRecord::chain_blocks).sum()
    }

    pub fn ids(&self) -> &IdMap {
        &self.ids
    }

    pub fn id_of(&self, ext: &str) -> Option<VertexId> {
        self.ids.get(ext).filter(|&v| self.is_live(v))
    }

    pub fn external_id(&self, v: VertexId) -> Option<&str> {
        self.ids.external(v)
    }

    /// True if some vertex was ever deleted, so edges may dangle.
    #[inline]
    pub fn has_deleted(&self) -> bool {
        self.live != self.vertices.len()
    }

    /// Changes whenever the structure is mutated; distinct across graphs.
    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    fn touch(&mut self) {
        self.stamp = next_stamp();
    }

    #[inline]
    pub fn is_live(&self, v: VertexId) -> bool {
        self.vertices.get(v.index()).is_some_and(|r| !r.deleted)
    }

    #[inline]
    pub(crate) fn live_record(&self, v: VertexId) -> Result<&VertexRecord, GraphError> {
        match self.vertices.get(v.index()) {
            Some(r) if !r.deleted => Ok(r),
            _ => Err(GraphError::UnknownVertex(v)),
        }
    }

    /// Constant-time vertex-table read; deleted vertices are returned with
    /// their flag set.
    pub fn read_vertex(&self, v: VertexId) -> Result<VertexRecord, GraphError> {
        self.vertices.get(v.index()).copied().ok_or(GraphError::UnknownVertex(v))
    }

    pub fn vertex_prop(&self, v: VertexId) -> Result<Option<&str>, GraphError> {
        self.live_record(v)?;
        Ok(self.vertex_props[v.index()].as_deref())
    }

    pub fn set_vertex_prop(&mut self, v: VertexId, prop: Option<String>) -> Result<(), GraphError> {
        self.live_record(v)?;
        self.vertex_props[v.index()] = prop;
        Ok(())
    }

    /// First block of the traversal chain.
    pub fn chain_head(&self) -> BlockRef {
        self.head
    }

    /// Appends a vertex. A deleted vertex's external id may be reused; it
    /// then maps to the new logical id.
    pub fn insert_vertex(&mut self, ext: &str, prop: Option<String>) -> Result<VertexId, GraphError> {
        self.touch();
        if self.id_of(ext).is_some() {
            return Err(GraphError::DuplicateExternalId(ext.to_owned()));
        }
        let v = VertexId(u32::try_from(self.vertices.len()).expect("vertex table full"));
        self.vertices.push(VertexRecord::EMPTY);
        self.vertex_props.push(prop);
        self.ids.forward.insert(ext.to_owned(), v);
        self.ids.reverse.push(ext.to_owned());
        self.live += 1;
        Ok(v)
    }

    /// Marks `v` deleted and frees its blocks. Edges from other vertices to
    /// `v` stay in storage but are filtered out of every scan.
    pub fn delete_vertex(&mut self, v: VertexId) -> Result<(), GraphError> {
        self.touch();
        let rec = *self.live_record(v)?;
        self.store.free_subtree(rec.query_link);
        self.vertices[v.index()] = VertexRecord {
            deleted: true,
            ..VertexRecord::EMPTY
        };
        self.vertex_props[v.index()] = None;
        self.live -= 1;
        if self.owners.remove(&v.0) {
            self.relink(v.0);
        }
        Ok(())
    }

    /// Inserts `src -> dst`; an existing edge gets its property replaced.
    pub fn insert_edge(&mut self, src: VertexId, dst: VertexId, prop: W) -> Result<InsertOutcome, GraphError> {
        self.touch();
        self.live_record(dst)?;
        let mut rec = *self.live_record(src)?;
        let loc = self.store.locate(&rec, dst.0);
        // SAFETY: `&mut self` gives exclusive access to every block.
        let (out, first_changed) = unsafe { self.store.insert_located(src.0, &mut rec, &loc, EdgeRecord { dst, prop }) };
        self.vertices[src.index()] = rec;
        if first_changed {
            self.owners.insert(src.0);
            self.relink(src.0);
        }
        Ok(out)
    }

    /// Removes `src -> dst`; `dst` may be deleted (dangling edge cleanup).
    pub fn delete_edge(&mut self, src: VertexId, dst: VertexId) -> Result<bool, GraphError> {
        self.touch();
        let mut rec = *self.live_record(src)?;
        let loc = self.store.locate(&rec, dst.0);
        // SAFETY: as in `insert_edge`.
        let removed = unsafe { self.store.delete_located(&mut rec, &loc, dst.0) };
        self.vertices[src.index()] = rec;
        Ok(removed)
    }

    /// Replaces the property of an existing edge; returns whether it existed.
    pub fn update_edge_prop(&mut self, src: VertexId, dst: VertexId, prop: W) -> Result<bool, GraphError> {
        self.touch();
        let rec = *self.live_record(src)?;
        let loc = self.store.locate(&rec, dst.0);
        // SAFETY: as in `insert_edge`.
        Ok(unsafe { self.store.update_located(&loc, dst.0, prop) })
    }

    /// Point lookup without suspension points.
    pub fn get_edge(&self, src: VertexId, dst: VertexId) -> Result<Option<EdgeRecord<W>>, GraphError> {
        let rec = self.live_record(src)?;
        Ok(self.store.find(rec, dst.0).filter(|e| self.is_live(e.dst)))
    }

    /// Out-edges of `v` in ascending destination order, edges to deleted
    /// vertices skipped.
    pub fn neighbors(&self, v: VertexId) -> Result<Neighbors<'_, W>, GraphError> {
        let rec = self.live_record(v)?;
        Ok(Neighbors {
            g: self,
            block: rec.traversal_link,
            blocks_left: rec.chain_blocks(),
            idx: 0,
            len: if rec.traversal_link.is_nil() { 0 } else { self.store.records(rec.traversal_link).len() },
        })
    }

    /// Live vertex ids in ascending order.
    pub fn live_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.deleted)
            .map(|(i, _)| VertexId(i as u32))
    }

    /// Chain blocks from the head, in order.
    pub fn chain(&self) -> ChainIter<'_, W> {
        ChainIter { g: self, cur: self.head }
    }

    /// Kind, owner, record count and chain successor of a block.
    pub fn block_info(&self, r: BlockRef) -> BlockInfo {
        let h = self.store.hdr(r);
        BlockInfo {
            kind: h.kind(),
            owner: VertexId(h.owner()),
            len: h.count(),
            next: h.next(),
        }
    }

    /// Records of a chunk or leaf, unfiltered.
    pub fn block_records(&self, r: BlockRef) -> Vec<EdgeRecord<W>> {
        self.store.records(r).iter().collect()
    }

    /// Re-targets the chain links around `v` from the current owner set.
    pub(crate) fn relink(&mut self, v: u32) {
        let prev = self.owners.range(..v).next_back().copied();
        let next_first = self
            .owners
            .range(v + 1..)
            .next()
            .map_or(BlockRef::NIL, |&n| self.vertices[n as usize].traversal_link);
        let rec = self.vertices[v as usize];
        let target = if rec.traversal_link.is_nil() {
            next_first
        } else {
            self.store.set_next(rec.tail, next_first);
            rec.traversal_link
        };
        match prev {
            Some(p) => {
                let tail = self.vertices[p as usize].tail;
                self.store.set_next(tail, target);
            }
            None => self.head = target,
        }
    }

    /// After a batch phase: refresh ownership of `touched` and repair links.
    pub(crate) fn repair_chain(&mut self, touched: &[u32]) {
        self.touch();
        for &v in touched {
            if self.vertices[v as usize].traversal_link.is_nil() {
                self.owners.remove(&v);
            } else {
                self.owners.insert(v);
            }
        }
        for &v in touched {
            self.relink(v);
        }
    }
}

impl<W: EdgeWeight> fmt::Debug for CbList<W> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CbList")
            .field("vertices", &self.vertices.len())
            .field("live", &self.live)
            .field("edges", &self.edge_count())
            .field("blocks", &self.block_count())
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockInfo {
    pub kind: BlockKind,
    pub owner: VertexId,
    pub len: usize,
    pub next: BlockRef,
}

pub struct Neighbors<'a, W: EdgeWeight> {
    g: &'a CbList<W>,
    block: BlockRef,
    blocks_left: usize,
    idx: usize,
    len: usize,
}

impl<W: EdgeWeight> Iterator for Neighbors<'_, W> {
    type Item = EdgeRecord<W>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.blocks_left == 0 {
                return None;
            }
            if self.idx < self.len {
                let e = self.g.store.records(self.block).get(self.idx);
                self.idx += 1;
                if self.g.is_live(e.dst) {
                    return Some(e);
                }
                continue;
            }
            self.blocks_left -= 1;
            if self.blocks_left == 0 {
                return None;
            }
            self.block = self.g.store.next(self.block);
            self.idx = 0;
            self.len = self.g.store.records(self.block).len();
        }
    }
}

pub struct ChainIter<'a, W: EdgeWeight> {
    g: &'a CbList<W>,
    cur: BlockRef,
}

impl<W: EdgeWeight> Iterator for ChainIter<'_, W> {
    type Item = BlockRef;

    fn next(&mut self) -> Option<BlockRef> {
        if self.cur.is_nil() {
            return None;
        }
        let out = self.cur;
        self.cur = self.g.store.next(out);
        Some(out)
    }
}

#[cfg(test)]
mod tests;
