//! In-slot layout of edge blocks.
//!
//! Every block starts with a 16-byte header. Record blocks (small chunks and
//! B+ leaves) follow it with a sorted record area laid out either as an array
//! of `EdgeRecord`s (AOE) or as a key array followed by a parallel property
//! array (AOA). Internal nodes hold a key array followed by a child array.
//! Keys of an internal node are lower bounds of the matching child subtree;
//! `keys[0]` is never consulted for routing.

use std::marker::PhantomData;
use std::mem::{align_of, size_of};
use std::ptr;

use serde::{Deserialize, Serialize};

use super::{EdgeRecord, VertexId};

pub(crate) const HEADER_BYTES: usize = 16;
const NODE_BIT: u32 = 1 << 31;

/// Handle of a chunk, leaf or internal node.
///
/// Small chunks and tree nodes live in separate arenas; the top bit selects
/// the arena.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct BlockRef(pub(crate) u32);

impl BlockRef {
    pub const NIL: BlockRef = BlockRef(u32::MAX);

    #[inline]
    pub(crate) fn chunk(idx: u32) -> Self {
        debug_assert!(idx & NODE_BIT == 0);
        BlockRef(idx)
    }

    #[inline]
    pub(crate) fn node(idx: u32) -> Self {
        debug_assert!(idx & NODE_BIT == 0);
        BlockRef(idx | NODE_BIT)
    }

    #[inline]
    pub fn is_nil(self) -> bool {
        self == Self::NIL
    }

    #[inline]
    pub(crate) fn is_node(self) -> bool {
        self.0 & NODE_BIT != 0
    }

    #[inline]
    pub(crate) fn index(self) -> u32 {
        self.0 & !NODE_BIT
    }

    pub fn raw(self) -> u32 {
        self.0
    }
}

/// What a block holds.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[repr(u8)]
pub enum BlockKind {
    Chunk = 0,
    Leaf = 1,
    Internal = 2,
}

impl BlockKind {
    fn from_u8(x: u8) -> Self {
        match x {
            0 => BlockKind::Chunk,
            1 => BlockKind::Leaf,
            2 => BlockKind::Internal,
            _ => unreachable!("corrupt block kind {x}"),
        }
    }
}

#[repr(C)]
pub(crate) struct Header {
    kind: u8,
    _pad: u8,
    count: u16,
    owner: u32,
    next: u32,
    _reserved: u32,
}

const _: () = assert!(size_of::<Header>() == HEADER_BYTES);

/// Edge property layout inside record blocks.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub enum PropertyMode {
    /// Property stored inline with each record.
    #[default]
    Aoe,
    /// Keys and properties in two parallel arrays per block.
    Aoa,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct RecordLayout {
    pub cap: usize,
    pub mode: PropertyMode,
    props_off: usize,
}

fn align_up(x: usize, a: usize) -> usize {
    x.div_ceil(a) * a
}

impl RecordLayout {
    pub(crate) fn new<W>(bytes: usize, mode: PropertyMode) -> Self {
        let avail = bytes.saturating_sub(HEADER_BYTES);
        match mode {
            PropertyMode::Aoe => RecordLayout {
                cap: avail / size_of::<EdgeRecord<W>>(),
                mode,
                props_off: 0,
            },
            PropertyMode::Aoa => {
                let mut cap = avail / (4 + size_of::<W>());
                while cap > 0 && align_up(HEADER_BYTES + 4 * cap, align_of::<W>()) + cap * size_of::<W>() > bytes {
                    cap -= 1;
                }
                RecordLayout {
                    cap,
                    mode,
                    props_off: align_up(HEADER_BYTES + 4 * cap, align_of::<W>()),
                }
            }
        }
    }
}

/// Internal node fanout for a slot of `bytes`.
pub(crate) fn inner_fanout(bytes: usize) -> usize {
    bytes.saturating_sub(HEADER_BYTES) / 8
}

#[inline]
pub(crate) fn header(base: *mut u8) -> *mut Header {
    base as *mut Header
}

impl Header {
    #[inline]
    pub(crate) fn kind(&self) -> BlockKind {
        BlockKind::from_u8(self.kind)
    }
    #[inline]
    pub(crate) fn init(&mut self, kind: BlockKind, owner: u32) {
        self.kind = kind as u8;
        self.count = 0;
        self.owner = owner;
        self.next = u32::MAX;
    }
    #[inline]
    pub(crate) fn count(&self) -> usize {
        self.count as usize
    }
    #[inline]
    pub(crate) fn owner(&self) -> u32 {
        self.owner
    }
    #[inline]
    pub(crate) fn next(&self) -> BlockRef {
        BlockRef(self.next)
    }
    #[inline]
    pub(crate) fn set_next(&mut self, next: BlockRef) {
        self.next = next.0;
    }
}

/// View of a chunk or leaf. Construction is unsafe: the caller vouches that
/// `base` is a live slot of the right layout and, for mutation, that nobody
/// else touches it.
pub(crate) struct Records<W> {
    base: *mut u8,
    lay: RecordLayout,
    _w: PhantomData<W>,
}

impl<W: Copy> Records<W> {
    #[inline]
    pub(crate) unsafe fn new(base: *mut u8, lay: RecordLayout) -> Self {
        Records { base, lay, _w: PhantomData }
    }

    #[inline]
    fn hdr(&self) -> &Header {
        unsafe { &*header(self.base) }
    }

    #[inline]
    pub(crate) fn len(&self) -> usize {
        self.hdr().count()
    }

    #[inline]
    pub(crate) fn cap(&self) -> usize {
        self.lay.cap
    }

    #[inline]
    fn set_len(&self, n: usize) {
        debug_assert!(n <= self.lay.cap);
        unsafe { (*header(self.base)).count = n as u16 };
    }

    #[inline]
    fn aoe(&self) -> *mut EdgeRecord<W> {
        unsafe { self.base.add(HEADER_BYTES) as *mut EdgeRecord<W> }
    }

    #[inline]
    fn keys(&self) -> *mut u32 {
        unsafe { self.base.add(HEADER_BYTES) as *mut u32 }
    }

    #[inline]
    fn props(&self) -> *mut W {
        unsafe { self.base.add(self.lay.props_off) as *mut W }
    }

    #[inline]
    pub(crate) fn key(&self, i: usize) -> u32 {
        debug_assert!(i < self.len());
        unsafe {
            match self.lay.mode {
                PropertyMode::Aoe => (*self.aoe().add(i)).dst.0,
                PropertyMode::Aoa => *self.keys().add(i),
            }
        }
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> EdgeRecord<W> {
        debug_assert!(i < self.len());
        unsafe {
            match self.lay.mode {
                PropertyMode::Aoe => *self.aoe().add(i),
                PropertyMode::Aoa => EdgeRecord {
                    dst: VertexId(*self.keys().add(i)),
                    prop: *self.props().add(i),
                },
            }
        }
    }

    #[inline]
    pub(crate) fn set_prop(&mut self, i: usize, prop: W) {
        debug_assert!(i < self.len());
        unsafe {
            match self.lay.mode {
                PropertyMode::Aoe => (*self.aoe().add(i)).prop = prop,
                PropertyMode::Aoa => *self.props().add(i) = prop,
            }
        }
    }

    #[inline]
    fn write(&mut self, i: usize, rec: EdgeRecord<W>) {
        unsafe {
            match self.lay.mode {
                PropertyMode::Aoe => ptr::write(self.aoe().add(i), rec),
                PropertyMode::Aoa => {
                    *self.keys().add(i) = rec.dst.0;
                    ptr::write(self.props().add(i), rec.prop);
                }
            }
        }
    }

    /// Moves `n` records from `from` to `to` within this block.
    #[inline]
    fn shift(&mut self, from: usize, to: usize, n: usize) {
        if n == 0 {
            return;
        }
        unsafe {
            match self.lay.mode {
                PropertyMode::Aoe => ptr::copy(self.aoe().add(from), self.aoe().add(to), n),
                PropertyMode::Aoa => {
                    ptr::copy(self.keys().add(from), self.keys().add(to), n);
                    ptr::copy(self.props().add(from), self.props().add(to), n);
                }
            }
        }
    }

    /// Binary search by destination.
    #[inline]
    pub(crate) fn search(&self, dst: u32) -> Result<usize, usize> {
        let n = self.len();
        unsafe {
            match self.lay.mode {
                PropertyMode::Aoe => std::slice::from_raw_parts(self.aoe(), n).binary_search_by_key(&dst, |r| r.dst.0),
                PropertyMode::Aoa => std::slice::from_raw_parts(self.keys(), n).binary_search(&dst),
            }
        }
    }

    pub(crate) fn insert(&mut self, i: usize, rec: EdgeRecord<W>) {
        let n = self.len();
        assert!(n < self.lay.cap && i <= n);
        self.shift(i, i + 1, n - i);
        self.write(i, rec);
        self.set_len(n + 1);
    }

    pub(crate) fn push(&mut self, rec: EdgeRecord<W>) {
        let n = self.len();
        self.insert(n, rec);
    }

    pub(crate) fn remove(&mut self, i: usize) -> EdgeRecord<W> {
        let n = self.len();
        let rec = self.get(i);
        self.shift(i + 1, i, n - i - 1);
        self.set_len(n - 1);
        rec
    }

    /// Moves records `[at, len)` to the end of `other`.
    pub(crate) fn move_tail_to(&mut self, at: usize, other: &mut Records<W>) {
        let n = self.len();
        for i in at..n {
            other.push(self.get(i));
        }
        self.set_len(at);
    }

    /// Appends all records of `other` and empties it.
    pub(crate) fn absorb(&mut self, other: &mut Records<W>) {
        other.move_tail_to(0, self);
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = EdgeRecord<W>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }
}

/// View of an internal B+ node.
pub(crate) struct Inner {
    base: *mut u8,
    fanout: usize,
}

impl Inner {
    #[inline]
    pub(crate) unsafe fn new(base: *mut u8, fanout: usize) -> Self {
        Inner { base, fanout }
    }

    #[inline]
    fn hdr(&self) -> &Header {
        unsafe { &*header(self.base) }
    }

    #[inline]
    pub(crate) fn len(&self) -> usize {
        self.hdr().count()
    }

    #[inline]
    fn set_len(&self, n: usize) {
        debug_assert!(n <= self.fanout);
        unsafe { (*header(self.base)).count = n as u16 };
    }

    #[inline]
    fn keys(&self) -> *mut u32 {
        unsafe { self.base.add(HEADER_BYTES) as *mut u32 }
    }

    #[inline]
    fn children(&self) -> *mut u32 {
        unsafe { self.base.add(HEADER_BYTES + 4 * self.fanout) as *mut u32 }
    }

    #[inline]
    pub(crate) fn key(&self, i: usize) -> u32 {
        debug_assert!(i < self.len());
        unsafe { *self.keys().add(i) }
    }

    #[inline]
    pub(crate) fn set_key(&mut self, i: usize, k: u32) {
        debug_assert!(i < self.len());
        unsafe { *self.keys().add(i) = k }
    }

    #[inline]
    pub(crate) fn child(&self, i: usize) -> BlockRef {
        debug_assert!(i < self.len());
        BlockRef(unsafe { *self.children().add(i) })
    }

    /// Index of the child whose key range contains `dst`.
    #[inline]
    pub(crate) fn route(&self, dst: u32) -> usize {
        let n = self.len();
        if n <= 1 {
            return 0;
        }
        let keys = unsafe { std::slice::from_raw_parts(self.keys().add(1), n - 1) };
        keys.partition_point(|&k| k <= dst)
    }

    pub(crate) fn insert(&mut self, i: usize, key: u32, child: BlockRef) {
        let n = self.len();
        assert!(n < self.fanout && i <= n);
        unsafe {
            ptr::copy(self.keys().add(i), self.keys().add(i + 1), n - i);
            ptr::copy(self.children().add(i), self.children().add(i + 1), n - i);
            *self.keys().add(i) = key;
            *self.children().add(i) = child.0;
        }
        self.set_len(n + 1);
    }

    pub(crate) fn push(&mut self, key: u32, child: BlockRef) {
        let n = self.len();
        self.insert(n, key, child);
    }

    pub(crate) fn remove(&mut self, i: usize) -> (u32, BlockRef) {
        let n = self.len();
        let out = (self.key(i), self.child(i));
        unsafe {
            ptr::copy(self.keys().add(i + 1), self.keys().add(i), n - i - 1);
            ptr::copy(self.children().add(i + 1), self.children().add(i), n - i - 1);
        }
        self.set_len(n - 1);
        out
    }

    /// Moves entries `[at, len)` to the end of `other`.
    pub(crate) fn move_tail_to(&mut self, at: usize, other: &mut Inner) {
        let n = self.len();
        for i in at..n {
            other.push(self.key(i), self.child(i));
        }
        self.set_len(at);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[repr(C, align(64))]
    struct Slot([u8; 256]);

    fn slot() -> Box<Slot> {
        Box::new(Slot([0; 256]))
    }

    #[test]
    fn capacities_fit_the_slot() {
        let aoe = RecordLayout::new::<u32>(256, PropertyMode::Aoe);
        assert_eq!(aoe.cap, 30);
        let aoe64 = RecordLayout::new::<f64>(256, PropertyMode::Aoe);
        assert_eq!(aoe64.cap, 15);
        let aoa64 = RecordLayout::new::<f64>(256, PropertyMode::Aoa);
        assert!(aoa64.props_off + aoa64.cap * 8 <= 256);
        assert_eq!(aoa64.props_off % 8, 0);
        assert_eq!(aoa64.cap, 20);
        assert_eq!(inner_fanout(256), 30);
    }

    fn exercise(mode: PropertyMode) {
        let mut s = slot();
        let lay = RecordLayout::new::<f64>(256, mode);
        unsafe { (*header(s.0.as_mut_ptr())).init(BlockKind::Chunk, 3) };
        let mut r = unsafe { Records::<f64>::new(s.0.as_mut_ptr(), lay) };
        for d in [5u32, 1, 9, 3] {
            let pos = r.search(d).unwrap_err();
            r.insert(pos, EdgeRecord { dst: VertexId(d), prop: d as f64 * 0.5 });
        }
        assert_eq!(r.iter().map(|e| e.dst.0).collect::<Vec<_>>(), vec![1, 3, 5, 9]);
        assert_eq!(r.search(5), Ok(2));
        r.set_prop(2, 7.25);
        assert_eq!(r.get(2).prop, 7.25);
        let gone = r.remove(0);
        assert_eq!(gone.dst.0, 1);
        assert_eq!(r.iter().map(|e| e.prop).collect::<Vec<_>>(), vec![1.5, 7.25, 4.5]);
    }

    #[test]
    fn records_both_modes() {
        exercise(PropertyMode::Aoe);
        exercise(PropertyMode::Aoa);
    }

    #[test]
    fn inner_routing() {
        let mut s = slot();
        let mut n = unsafe { Inner::new(s.0.as_mut_ptr(), 30) };
        unsafe { (*header(s.0.as_mut_ptr())).init(BlockKind::Internal, 0) };
        n.push(0, BlockRef::node(10));
        n.push(10, BlockRef::node(11));
        n.push(20, BlockRef::node(12));
        assert_eq!(n.route(0), 0);
        assert_eq!(n.route(9), 0);
        assert_eq!(n.route(10), 1);
        assert_eq!(n.route(25), 2);
        assert_eq!(n.remove(1), (10, BlockRef::node(11)));
        assert_eq!(n.route(15), 0);
    }
}
