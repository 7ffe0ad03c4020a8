//! Suspendable access operations.
//!
//! Each operation is a future that, before touching a block, asks the gate
//! whether to issue a software prefetch; if so it hints the block and
//! suspends once so another task can run while the line is in flight. The
//! futures never register wakers: they are driven by the pollers in
//! [`crate::engine`].

use std::cell::Cell;
use std::future::Future;
use std::ops::{Add, AddAssign};
use std::pin::Pin;
use std::task::{Context, Poll};

use serde::{Deserialize, Serialize};

use crate::adapt::{gate, PrefetchStrategy};
use crate::cblist::nbhd::Step;
use crate::cblist::{BlockKind, BlockRef, CbList, EdgeRecord, Located, Store, VertexId, VertexRecord};
use crate::error::GraphError;
use crate::prefetch::prefetch_read;
use crate::EdgeWeight;

/// Software counters of one worker, or a sum of several.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub hints: u64,
    pub yields: u64,
    pub blocks_visited: u64,
    pub node_visits: u64,
    pub records_visited: u64,
}

impl AddAssign for CounterSnapshot {
    fn add_assign(&mut self, o: Self) {
        self.hints += o.hints;
        self.yields += o.yields;
        self.blocks_visited += o.blocks_visited;
        self.node_visits += o.node_visits;
        self.records_visited += o.records_visited;
    }
}

impl Add for CounterSnapshot {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

/// Per-thread state shared by the tasks of one pool: the prefetch strategy,
/// the unfinished-task count seen by the trimmed scheduler, and counters.
#[derive(Debug)]
pub struct TaskCtx {
    strategy: PrefetchStrategy,
    trimmed: Cell<bool>,
    remain: Cell<usize>,
    hints: Cell<u64>,
    yields: Cell<u64>,
    blocks: Cell<u64>,
    nodes: Cell<u64>,
    records: Cell<u64>,
}

fn bump(c: &Cell<u64>, by: u64) {
    c.set(c.get() + by);
}

impl TaskCtx {
    pub fn new(strategy: PrefetchStrategy) -> Self {
        TaskCtx {
            strategy,
            trimmed: Cell::new(false),
            remain: Cell::new(0),
            hints: Cell::new(0),
            yields: Cell::new(0),
            blocks: Cell::new(0),
            nodes: Cell::new(0),
            records: Cell::new(0),
        }
    }

    pub fn strategy(&self) -> PrefetchStrategy {
        self.strategy
    }

    /// Unfinished tasks in the pool, as last published by the scheduler.
    pub fn remain(&self) -> usize {
        self.remain.get()
    }

    pub(crate) fn set_trimmed(&self, on: bool) {
        self.trimmed.set(on);
    }

    pub(crate) fn set_remain(&self, n: usize) {
        self.remain.set(n);
    }

    /// Suspends once, unless this is the sole unfinished task under the
    /// trimmed scheduler.
    pub fn suspend(&self) -> Suspend {
        let skip = self.trimmed.get() && self.remain.get() == 1;
        if !skip {
            bump(&self.yields, 1);
        }
        Suspend { pending: !skip }
    }

    /// Unconditional hint followed by [`TaskCtx::suspend`].
    pub fn prefetch_and_yield<T>(&self, ptr: *const T) -> Suspend {
        prefetch_read(ptr);
        bump(&self.hints, 1);
        self.suspend()
    }

    /// Gated hint and yield before touching a block.
    #[inline]
    pub(crate) fn gate_point(&self, ptr: *const u8, kind: BlockKind, index: usize) -> Suspend {
        let d = gate(self.strategy, kind, index);
        if d.hint {
            prefetch_read(ptr);
            bump(&self.hints, 1);
        }
        if d.yield_now {
            self.suspend()
        } else {
            Suspend { pending: false }
        }
    }

    pub(crate) fn count_block(&self, records: usize) {
        bump(&self.blocks, 1);
        bump(&self.records, records as u64);
    }

    pub(crate) fn count_node(&self) {
        bump(&self.nodes, 1);
    }

    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            hints: self.hints.get(),
            yields: self.yields.get(),
            blocks_visited: self.blocks.get(),
            node_visits: self.nodes.get(),
            records_visited: self.records.get(),
        }
    }
}

/// Returns `Pending` exactly once (or never, when created as a no-op).
#[derive(Debug)]
#[must_use = "a suspension point does nothing unless awaited"]
pub struct Suspend {
    pending: bool,
}

impl Future for Suspend {
    type Output = ();

    fn poll(mut self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        if self.pending {
            self.pending = false;
            Poll::Pending
        } else {
            Poll::Ready(())
        }
    }
}

/// Gate class of a block, known from its handle without reading it.
#[inline]
fn class_of(r: BlockRef) -> BlockKind {
    if r.is_node() {
        BlockKind::Leaf
    } else {
        BlockKind::Chunk
    }
}

/// A contiguous run of traversal-chain blocks, `end` exclusive (`NIL`
/// means the end of the chain).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SubChain {
    pub start: BlockRef,
    pub end: BlockRef,
    /// Number of blocks in the run.
    pub blocks: usize,
}

impl SubChain {
    pub fn full<W: EdgeWeight>(g: &CbList<W>) -> Self {
        SubChain {
            start: g.chain_head(),
            end: BlockRef::NIL,
            blocks: g.block_count(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Best-effort hint that `block` will be read soon. Never faults; a no-op
/// for `NIL` and on targets without a prefetch instruction.
pub fn prefetch_hint<W: EdgeWeight>(g: &CbList<W>, block: BlockRef) {
    if !block.is_nil() {
        prefetch_read(g.store.ptr(block));
    }
}

#[inline]
fn visit_block<W: EdgeWeight>(
    g: &CbList<W>,
    ctx: &TaskCtx,
    block: BlockRef,
    filter: bool,
    mut f: impl FnMut(EdgeRecord<W>),
) -> (usize, BlockRef) {
    let recs = g.store.records(block);
    let n = recs.len();
    let mut seen = 0;
    for i in 0..n {
        let e = recs.get(i);
        if !filter || g.is_live(e.dst) {
            f(e);
            seen += 1;
        }
    }
    ctx.count_block(n);
    (seen, g.store.next(block))
}

/// Visits the out-edges of `v` block by block (one block for a chunk,
/// `level` leaves for a tree). Resolves to the number of edges visited.
pub fn get_neighbors_vertex<'a, W, V>(
    g: &'a CbList<W>,
    ctx: &'a TaskCtx,
    v: VertexId,
    mut visit: V,
) -> Result<impl Future<Output = usize> + 'a, GraphError>
where
    W: EdgeWeight,
    V: FnMut(EdgeRecord<W>) + 'a,
{
    let rec = *g.live_record(v)?;
    let filter = g.has_deleted();
    Ok(async move {
        let mut block = rec.traversal_link;
        let mut seen = 0;
        for i in 0..rec.chain_blocks() {
            ctx.gate_point(g.store.ptr(block), class_of(block), i).await;
            let (n, next) = visit_block(g, ctx, block, filter, &mut visit);
            seen += n;
            block = next;
        }
        seen
    })
}

/// Visits every record of a chain segment, passing the owning vertex.
/// Resolves to the number of edges visited, or
/// [`GraphError::InvalidSubChain`] if the chain ends before `sub.end`.
pub fn get_neighbors_chain<'a, W, V>(
    g: &'a CbList<W>,
    ctx: &'a TaskCtx,
    sub: SubChain,
    mut visit: V,
) -> impl Future<Output = Result<usize, GraphError>> + 'a
where
    W: EdgeWeight,
    V: FnMut(VertexId, EdgeRecord<W>) + 'a,
{
    let filter = g.has_deleted();
    async move {
        let mut block = sub.start;
        let mut seen = 0;
        let mut i = 0;
        while block != sub.end {
            if block.is_nil() {
                return Err(GraphError::InvalidSubChain);
            }
            ctx.gate_point(g.store.ptr(block), class_of(block), i).await;
            let owner = VertexId(g.store.hdr(block).owner());
            let (n, next) = visit_block(g, ctx, block, filter, |e| visit(owner, e));
            seen += n;
            block = next;
            i += 1;
        }
        Ok(seen)
    }
}

/// Root-to-leaf descent with a gated hint and yield per tree node. Small
/// chunks are resolved without suspending.
pub(crate) async fn locate_gated<W: EdgeWeight>(
    store: &Store<W>,
    ctx: &TaskCtx,
    rec: &VertexRecord,
    dst: u32,
) -> Located {
    if rec.level == 0 {
        return store.locate(rec, dst);
    }
    let mut path = crate::cblist::nbhd::Path::new();
    let mut node = rec.query_link;
    let mut depth = 0;
    loop {
        ctx.gate_point(store.ptr(node), BlockKind::Leaf, depth).await;
        ctx.count_node();
        match store.step(node, dst) {
            Step::Leaf => break,
            Step::Child(i, child) => {
                path.push((node, i as u16));
                node = child;
                depth += 1;
            }
        }
    }
    Located { path, target: node }
}

/// Point lookup of `src -> dst`.
pub fn find_neighbor<'a, W: EdgeWeight>(
    g: &'a CbList<W>,
    ctx: &'a TaskCtx,
    src: VertexId,
    dst: VertexId,
) -> Result<impl Future<Output = Option<EdgeRecord<W>>> + 'a, GraphError> {
    let rec = *g.live_record(src)?;
    Ok(async move {
        let loc = locate_gated(&g.store, ctx, &rec, dst.0).await;
        if loc.target.is_nil() {
            return None;
        }
        let recs = g.store.records(loc.target);
        let hit = recs.search(dst.0).ok().map(|i| recs.get(i));
        hit.filter(|e| g.is_live(e.dst))
    })
}

/// Visits live vertices satisfying `cond`, in ascending id order.
pub fn scan_vertices<W, C, V>(g: &CbList<W>, mut cond: C, mut visit: V) -> usize
where
    W: EdgeWeight,
    C: FnMut(VertexId, &VertexRecord) -> bool,
    V: FnMut(VertexId, &VertexRecord),
{
    let mut n = 0;
    for (i, rec) in g.vertices.iter().enumerate() {
        let v = VertexId(i as u32);
        if !rec.deleted && cond(v, rec) {
            visit(v, rec);
            n += 1;
        }
    }
    n
}
