use std::marker::PhantomData;

use super::arena::BlockArena;
use super::block::{header, inner_fanout, BlockKind, BlockRef, Header, Inner, RecordLayout, Records};
use super::{CbListConfig, EdgeRecord};
use crate::error::GraphError;
use crate::EdgeWeight;

/// Block storage shared by all vertices: two arenas plus the derived
/// geometry. Resolving handles only needs `&self`.
pub(crate) struct Store<W> {
    chunks: BlockArena,
    nodes: BlockArena,
    pub(crate) chunk_lay: RecordLayout,
    pub(crate) leaf_lay: RecordLayout,
    pub(crate) fanout: usize,
    _w: PhantomData<W>,
}

impl<W: EdgeWeight> Store<W> {
    pub(crate) fn new(cfg: &CbListConfig) -> Result<Self, GraphError> {
        let line = cfg.cache_line_bytes;
        if !line.is_power_of_two() || line < 16 {
            return Err(GraphError::InvalidConfig(format!(
                "cache line size {line} must be a power of two >= 16"
            )));
        }
        if cfg.chunk_lines == 0 || cfg.node_lines == 0 {
            return Err(GraphError::InvalidConfig("block sizes must be at least one line".into()));
        }
        let chunk_bytes = cfg.chunk_lines * line;
        let node_bytes = cfg.node_lines * line;
        let chunk_lay = RecordLayout::new::<W>(chunk_bytes, cfg.property_mode);
        let leaf_lay = RecordLayout::new::<W>(node_bytes, cfg.property_mode);
        let fanout = inner_fanout(node_bytes);
        if chunk_lay.cap < 1 {
            return Err(GraphError::InvalidConfig("small chunk holds no record".into()));
        }
        if leaf_lay.cap < 2 {
            return Err(GraphError::InvalidConfig("B+ leaf must hold at least two records".into()));
        }
        if fanout < 4 {
            return Err(GraphError::InvalidConfig(format!("B+ fanout {fanout} below minimum 4")));
        }
        if chunk_lay.cap > u16::MAX as usize || leaf_lay.cap > u16::MAX as usize || fanout > u16::MAX as usize {
            return Err(GraphError::InvalidConfig("block too large for 16-bit counts".into()));
        }
        Ok(Store {
            chunks: BlockArena::new(chunk_bytes, line),
            nodes: BlockArena::new(node_bytes, line),
            chunk_lay,
            leaf_lay,
            fanout,
            _w: PhantomData,
        })
    }

    #[inline]
    pub(crate) fn ptr(&self, r: BlockRef) -> *mut u8 {
        debug_assert!(!r.is_nil());
        if r.is_node() {
            self.nodes.slot_ptr(r.index())
        } else {
            self.chunks.slot_ptr(r.index())
        }
    }

    #[inline]
    pub(crate) fn hdr(&self, r: BlockRef) -> &Header {
        unsafe { &*header(self.ptr(r)) }
    }

    #[inline]
    pub(crate) fn set_next(&self, r: BlockRef, next: BlockRef) {
        unsafe { (*header(self.ptr(r))).set_next(next) }
    }

    #[inline]
    pub(crate) fn kind(&self, r: BlockRef) -> BlockKind {
        self.hdr(r).kind()
    }

    #[inline]
    pub(crate) fn next(&self, r: BlockRef) -> BlockRef {
        self.hdr(r).next()
    }

    /// Record view of a chunk or leaf.
    #[inline]
    pub(crate) fn records(&self, r: BlockRef) -> Records<W> {
        let lay = if r.is_node() { self.leaf_lay } else { self.chunk_lay };
        debug_assert!(self.kind(r) != BlockKind::Internal);
        unsafe { Records::new(self.ptr(r), lay) }
    }

    #[inline]
    pub(crate) fn inner(&self, r: BlockRef) -> Inner {
        debug_assert!(self.kind(r) == BlockKind::Internal);
        unsafe { Inner::new(self.ptr(r), self.fanout) }
    }

    pub(crate) fn alloc(&self, kind: BlockKind, owner: u32) -> BlockRef {
        let r = match kind {
            BlockKind::Chunk => BlockRef::chunk(self.chunks.alloc()),
            _ => BlockRef::node(self.nodes.alloc()),
        };
        unsafe { (*header(self.ptr(r))).init(kind, owner) };
        r
    }

    pub(crate) fn free(&self, r: BlockRef) {
        if r.is_node() {
            self.nodes.free(r.index());
        } else {
            self.chunks.free(r.index());
        }
    }

    pub(crate) fn chunk_bytes(&self) -> usize {
        self.chunks.slot_bytes()
    }

    pub(crate) fn node_bytes(&self) -> usize {
        self.nodes.slot_bytes()
    }

    /// Allocated (chunk, node) slot counts.
    pub(crate) fn live_blocks(&self) -> (usize, usize) {
        (self.chunks.live(), self.nodes.live())
    }

    pub(crate) fn min_leaf(&self) -> usize {
        self.leaf_lay.cap.div_ceil(2)
    }

    pub(crate) fn min_inner(&self) -> usize {
        self.fanout.div_ceil(2)
    }
}

/// Result of a bulk tree build.
pub(crate) struct BuiltTree {
    pub root: BlockRef,
    pub first_leaf: BlockRef,
    pub last_leaf: BlockRef,
    pub leaves: usize,
}

/// Splits `n` items into `parts` near-equal runs (earlier runs take the extra).
pub(crate) fn even_sizes(n: usize, parts: usize) -> impl Iterator<Item = usize> {
    let base = n / parts;
    let extra = n % parts;
    (0..parts).map(move |i| base + usize::from(i < extra))
}

impl<W: EdgeWeight> Store<W> {
    /// Builds a B+ tree over sorted `records`. The root is always an
    /// internal node, even above a single leaf.
    pub(crate) fn build_tree(&self, owner: u32, records: &[EdgeRecord<W>]) -> BuiltTree {
        let n = records.len();
        let leaves = n.div_ceil(self.leaf_lay.cap).max(1);
        let mut level: Vec<(u32, BlockRef)> = Vec::with_capacity(leaves);
        let mut pos = 0;
        let mut prev = BlockRef::NIL;
        for size in even_sizes(n, leaves) {
            let leaf = self.alloc(BlockKind::Leaf, owner);
            let mut recs = self.records(leaf);
            for r in &records[pos..pos + size] {
                recs.push(*r);
            }
            let key = if size > 0 { records[pos].dst.0 } else { 0 };
            pos += size;
            if !prev.is_nil() {
                self.set_next(prev, leaf);
            }
            prev = leaf;
            level.push((key, leaf));
        }
        let first_leaf = level[0].1;
        let last_leaf = prev;
        loop {
            let groups = level.len().div_ceil(self.fanout);
            let mut parents = Vec::with_capacity(groups);
            let total = level.len();
            let mut it = level.into_iter();
            for size in even_sizes(total, groups) {
                let node = self.alloc(BlockKind::Internal, owner);
                let mut inner = self.inner(node);
                let mut first_key = 0;
                for j in 0..size {
                    let (k, c) = it.next().expect("group sizes sum to level length");
                    if j == 0 {
                        first_key = k;
                    }
                    inner.push(k, c);
                }
                parents.push((first_key, node));
            }
            level = parents;
            if level.len() == 1 {
                break;
            }
        }
        BuiltTree {
            root: level[0].1,
            first_leaf,
            last_leaf,
            leaves,
        }
    }

    /// Frees every node of the tree under `root` (or the chunk itself).
    pub(crate) fn free_subtree(&self, root: BlockRef) {
        if root.is_nil() {
            return;
        }
        if self.kind(root) == BlockKind::Internal {
            let inner = self.inner(root);
            for i in 0..inner.len() {
                self.free_subtree(inner.child(i));
            }
        }
        self.free(root);
    }
}
