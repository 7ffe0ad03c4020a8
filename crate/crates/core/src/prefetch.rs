//! Software prefetch hints.

/// True when this build emits a real prefetch instruction.
pub const ENABLED: bool = cfg!(any(target_arch = "x86_64", target_arch = "aarch64"));

/// Hint that the cache line at `ptr` will be read soon.
///
/// The hint is non-binding and never faults, even on unmapped addresses. On
/// targets without a prefetch instruction it compiles to nothing.
#[inline(always)]
pub fn prefetch_read<T>(ptr: *const T) {
    #[cfg(target_arch = "x86_64")]
    unsafe {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        _mm_prefetch(ptr as *const i8, _MM_HINT_T0);
    }

    #[cfg(target_arch = "aarch64")]
    unsafe {
        std::arch::asm!(
            "prfm pldl1keep, [{ptr}]",
            ptr = in(reg) ptr,
            options(nostack, preserves_flags, readonly)
        );
    }

    #[cfg(not(any(target_arch = "x86_64", target_arch = "aarch64")))]
    {
        let _ = ptr;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hint_is_transparent() {
        let data = vec![7u64; 64];
        prefetch_read(data.as_ptr());
        prefetch_read(std::ptr::null::<u8>());
        assert!(data.iter().all(|&x| x == 7));
    }
}
