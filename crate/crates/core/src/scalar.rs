//! Scalar abstraction: the numeric kernels are written once over [`Real`]
//! and instantiated for `f32` (frame storage, inference) and `f64`
//! (training, oracles).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

pub trait Real:
    num_traits::Float
    + num_traits::NumCast
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough constructor for literals and counters.
    fn from_f64(v: f64) -> Self {
        num_traits::cast(v).expect("f64 -> Real conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::cast(self).expect("Real -> f64 conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}
