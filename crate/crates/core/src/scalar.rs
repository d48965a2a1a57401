//! Scalar abstraction for the numeric perception code.

use std::fmt::{Debug, Display};

/// Floating point type usable by the gaze and thermal pipelines: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::iter::Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64` constants. Panics only for non-representable
    /// values, which no finite configuration produces.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 literal")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
