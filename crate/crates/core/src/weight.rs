use std::fmt::{Debug, Display};

use num_traits::{Bounded, Num, NumCast, ToPrimitive};

/// Scalar stored as the per-edge property (weight).
///
/// Implemented for `u32`, `u64`, `f32` and `f64`. The monotone key maps a
/// non-negative weight to a `u64` whose unsigned order matches the weight
/// order, which lets distance arrays be relaxed with plain atomic `fetch_min`.
pub trait EdgeWeight:
    Num + NumCast + ToPrimitive + Bounded + Copy + PartialOrd + Debug + Display + Send + Sync + 'static
{
    /// Addition that clamps at `max_value()` instead of overflowing.
    fn saturating_plus(self, other: Self) -> Self;
    /// Order-preserving encoding for non-negative values.
    fn to_key(self) -> u64;
    fn from_key(key: u64) -> Self;
    /// Raw bit pattern, used for checksums.
    fn to_bits64(self) -> u64;
    fn is_negative(self) -> bool {
        self < Self::zero()
    }
}

macro_rules! impl_int_weight {
    ($($t:ty),*) => {$(
        impl EdgeWeight for $t {
            #[inline]
            fn saturating_plus(self, other: Self) -> Self {
                self.saturating_add(other)
            }
            #[inline]
            fn to_key(self) -> u64 {
                self as u64
            }
            #[inline]
            fn from_key(key: u64) -> Self {
                key as $t
            }
            #[inline]
            fn to_bits64(self) -> u64 {
                self as u64
            }
        }
    )*};
}

impl_int_weight!(u32, u64);

impl EdgeWeight for f64 {
    #[inline]
    fn saturating_plus(self, other: Self) -> Self {
        (self + other).min(f64::MAX)
    }
    #[inline]
    fn to_key(self) -> u64 {
        // non-negative IEEE doubles order like their bit patterns
        self.max(0.0).to_bits()
    }
    #[inline]
    fn from_key(key: u64) -> Self {
        f64::from_bits(key)
    }
    #[inline]
    fn to_bits64(self) -> u64 {
        self.to_bits()
    }
}

impl EdgeWeight for f32 {
    #[inline]
    fn saturating_plus(self, other: Self) -> Self {
        (self + other).min(f32::MAX)
    }
    #[inline]
    fn to_key(self) -> u64 {
        self.max(0.0).to_bits() as u64
    }
    #[inline]
    fn from_key(key: u64) -> Self {
        f32::from_bits(key as u32)
    }
    #[inline]
    fn to_bits64(self) -> u64 {
        self.to_bits() as u64
    }
}
