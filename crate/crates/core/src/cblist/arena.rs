//! Slab allocator for fixed-size, cache-line aligned blocks.
//!
//! Slots live in pages that are never moved or freed before the arena is
//! dropped, so a handle resolves to a stable address. The page directory is
//! a fixed array of atomic pointers: resolving a handle is two loads and
//! never takes a lock, while allocation serializes on a mutex.

use std::alloc::{self, Layout};
use std::ptr;
use std::sync::atomic::{AtomicPtr, Ordering};
use std::sync::Mutex;

pub(crate) const PAGE_SHIFT: u32 = 11;
pub(crate) const SLOTS_PER_PAGE: usize = 1 << PAGE_SHIFT;
const DIRECTORY_LEN: usize = 1 << 15;
/// Largest slot index an arena can hand out.
pub(crate) const MAX_SLOTS: usize = SLOTS_PER_PAGE * DIRECTORY_LEN;

#[derive(Default)]
struct FreeState {
    next_fresh: u32,
    free: Vec<u32>,
    live: usize,
}

pub(crate) struct BlockArena {
    slot_bytes: usize,
    page_layout: Layout,
    pages: Box<[AtomicPtr<u8>]>,
    state: Mutex<FreeState>,
}

// Safety: the arena owns its pages. Shared references only hand out raw
// pointers; callers that write through them guarantee exclusive access to
// the slots they touch (see `CbList`'s batch path).
unsafe impl Send for BlockArena {}
unsafe impl Sync for BlockArena {}

impl BlockArena {
    /// `slot_bytes` must be a multiple of `align`, and `align` a power of two.
    pub(crate) fn new(slot_bytes: usize, align: usize) -> Self {
        assert!(align.is_power_of_two() && slot_bytes.is_multiple_of(align) && slot_bytes > 0);
        let page_layout = Layout::from_size_align(slot_bytes * SLOTS_PER_PAGE, align)
            .expect("arena page layout");
        let pages = (0..DIRECTORY_LEN)
            .map(|_| AtomicPtr::new(ptr::null_mut()))
            .collect::<Vec<_>>()
            .into_boxed_slice();
        Self {
            slot_bytes,
            page_layout,
            pages,
            state: Mutex::new(FreeState::default()),
        }
    }

    #[inline]
    pub(crate) fn slot_bytes(&self) -> usize {
        self.slot_bytes
    }

    /// Allocates a zeroed slot and returns its index.
    pub(crate) fn alloc(&self) -> u32 {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        st.live += 1;
        if let Some(idx) = st.free.pop() {
            drop(st);
            unsafe { ptr::write_bytes(self.slot_ptr(idx), 0, self.slot_bytes) };
            return idx;
        }
        let idx = st.next_fresh;
        assert!((idx as usize) < MAX_SLOTS, "block arena exhausted");
        let page = (idx >> PAGE_SHIFT) as usize;
        if self.pages[page].load(Ordering::Acquire).is_null() {
            let mem = unsafe { alloc::alloc_zeroed(self.page_layout) };
            if mem.is_null() {
                alloc::handle_alloc_error(self.page_layout);
            }
            self.pages[page].store(mem, Ordering::Release);
        }
        st.next_fresh += 1;
        idx
    }

    pub(crate) fn free(&self, idx: u32) {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        debug_assert!(idx < st.next_fresh);
        st.live -= 1;
        st.free.push(idx);
    }

    /// Number of slots currently allocated.
    pub(crate) fn live(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).live
    }

    /// Address of slot `idx`. The slot must have been allocated.
    #[inline]
    pub(crate) fn slot_ptr(&self, idx: u32) -> *mut u8 {
        let page = self.pages[(idx >> PAGE_SHIFT) as usize].load(Ordering::Acquire);
        debug_assert!(!page.is_null(), "slot {idx} not allocated");
        unsafe { page.add((idx as usize & (SLOTS_PER_PAGE - 1)) * self.slot_bytes) }
    }
}

impl Drop for BlockArena {
    fn drop(&mut self) {
        for p in self.pages.iter() {
            let mem = p.load(Ordering::Relaxed);
            if mem.is_null() {
                break;
            }
            unsafe { alloc::dealloc(mem, self.page_layout) };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_are_aligned_and_reused() {
        let arena = BlockArena::new(256, 64);
        let a = arena.alloc();
        let b = arena.alloc();
        assert_ne!(a, b);
        assert_eq!(arena.slot_ptr(a) as usize % 64, 0);
        assert_eq!(arena.slot_ptr(b) as usize - arena.slot_ptr(a) as usize, 256);
        unsafe { *arena.slot_ptr(a) = 9 };
        arena.free(a);
        let c = arena.alloc();
        assert_eq!(c, a);
        assert_eq!(unsafe { *arena.slot_ptr(c) }, 0, "recycled slots are zeroed");
        assert_eq!(arena.live(), 2);
    }

    #[test]
    fn crosses_page_boundaries() {
        let arena = BlockArena::new(64, 64);
        let ids: Vec<u32> = (0..SLOTS_PER_PAGE as u32 + 3).map(|_| arena.alloc()).collect();
        let last = *ids.last().unwrap();
        unsafe { *arena.slot_ptr(last) = 1 };
        assert_eq!(arena.slot_ptr(last) as usize % 64, 0);
    }

    #[test]
    fn concurrent_allocation_yields_distinct_slots() {
        let arena = BlockArena::new(128, 64);
        let mut all: Vec<u32> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..4)
                .map(|_| s.spawn(|| (0..3000).map(|_| arena.alloc()).collect::<Vec<_>>()))
                .collect();
            hs.into_iter().flat_map(|h| h.join().unwrap()).collect()
        });
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 12000);
    }
}
