//! Floating-point abstraction shared by the simulator, the networks and the
//! evaluation code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts a literal constant. Every `f64` literal used by the crate is
    /// representable (possibly rounded) in `f32`, so this never fails.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Casts a fixed-size array between scalar types.
pub fn cast_array<A: Scalar, B: Scalar, const N: usize>(a: &[A; N]) -> [B; N] {
    let mut out = [B::zero(); N];
    for (o, v) in out.iter_mut().zip(a) {
        *o = B::lit(v.as_f64());
    }
    out
}
