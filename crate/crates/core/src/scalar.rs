//! Floating-point scalar abstraction for truth values.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};

/// A truth-value scalar: `f32` or `f64`.
///
/// Inference runs in `f64` by default; perfect matrices hold only 0 and 1,
/// so every t-norm on them stays exact in either width.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for file I/O and configuration values.
    fn from_f64_lossy(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 converts to any float width")
    }

    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
