use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of tensors, spectrograms and models.
///
/// Implemented for `f32` (inference) and `f64` (gradient verification).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + rustfft::FftNum
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Short type name written into containers and logs.
    const NAME: &'static str;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    const NAME: &'static str = "f64";
}

/// Numeric mode of a whole model pass. Never mixed within one pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    #[default]
    F32,
    F64,
}
