//! Scalar abstraction for the path calculus.
//!
//! Everything numeric in this crate is generic over [`Real`], which is
//! `f32` or `f64` in practice. The trait bundles the float arithmetic
//! from `num-traits` with the handful of distribution draws the samplers
//! need, so downstream code never names `rand_distr` types directly.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + fmt::Display
    + fmt::Debug
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// One standard normal draw.
    fn draw_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One Exp(1) draw.
    fn draw_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One uniform draw from the open interval (0, 1).
    fn draw_open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Raw bit pattern, used for bitwise path comparison.
    fn to_bit_pattern(self) -> u64;

    /// Lossless-enough conversion for statistics aggregation.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    fn from_f64_exact(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to scalar")
    }

    fn from_usize_exact(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to scalar")
    }
}

impl Real for f64 {
    fn draw_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn draw_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Exp1.sample(rng)
    }

    fn draw_open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Open01.sample(rng)
    }

    fn to_bit_pattern(self) -> u64 {
        self.to_bits()
    }
}

impl Real for f32 {
    fn draw_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn draw_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Exp1.sample(rng)
    }

    fn draw_open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Open01.sample(rng)
    }

    fn to_bit_pattern(self) -> u64 {
        self.to_bits() as u64
    }
}

/// `min` with a fixed total order on non-NaN floats.
///
/// Both the O(n) reflection kernel and the O(n²) oracle must reduce with
/// the exact same operation so their outputs can be compared bitwise;
/// `f64::min` has unspecified behaviour on signed zeros, this does not.
#[inline]
pub fn min_ordered<T: Real>(a: T, b: T) -> T {
    if b < a {
        b
    } else {
        a
    }
}
