//! Load-balancing partitions of the traversal chain and the vertex table.

use std::ops::Range;

use crate::access::SubChain;
use crate::cblist::store::even_sizes;
use crate::cblist::{BlockRef, CbList};
use crate::EdgeWeight;

/// Cuts the chain into `min(n, X)` contiguous segments whose block counts
/// differ by at most one (earlier segments take the extra block). One walk.
pub fn partition_gtchain<W: EdgeWeight>(g: &CbList<W>, n: usize) -> Vec<SubChain> {
    let x = g.block_count();
    let parts = n.min(x);
    if parts == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(parts);
    let mut cur = g.chain_head();
    for size in even_sizes(x, parts) {
        let start = cur;
        for _ in 0..size {
            cur = g.store.next(cur);
        }
        out.push(SubChain { start, end: cur, blocks: size });
    }
    debug_assert_eq!(cur, BlockRef::NIL);
    out
}

/// Splits `[0, v)` into `min(n, v)` contiguous ranges whose lengths differ
/// by at most one.
pub fn partition_vertex_table(v: usize, n: usize) -> Vec<Range<u32>> {
    let parts = n.min(v);
    if parts == 0 {
        return Vec::new();
    }
    let mut lo = 0u32;
    even_sizes(v, parts)
        .map(|len| {
            let r = lo..lo + len as u32;
            lo = r.end;
            r
        })
        .collect()
}

/// Splits `items` into `n` contiguous near-equal slices (some may be empty).
pub fn split_even<T>(items: &[T], n: usize) -> Vec<&[T]> {
    let mut rest = items;
    even_sizes(items.len(), n.max(1))
        .map(|len| {
            let (a, b) = rest.split_at(len);
            rest = b;
            a
        })
        .collect()
}
