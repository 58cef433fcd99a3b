use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Real scalar the solver is generic over. Implemented for `f32` and `f64`.
pub trait Scalar: RealField + Copy + ToPrimitive {
    /// Lossy conversion used for reporting and error payloads.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    nalgebra::convert(x)
}

#[inline]
pub(crate) fn from_usize<T: Scalar>(k: usize) -> T {
    nalgebra::convert(k as f64)
}
