//! Scalar abstraction shared by every numeric module.
//!
//! All linear algebra is written against [`Real`], implemented for `f32` and
//! `f64`. Complex values are plain [`num_complex::Complex`] so they interoperate
//! with `nalgebra` and `rustfft` without conversion.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::ToPrimitive;
use rustfft::FftNum;

/// Real floating point scalar usable throughout the crate.
pub trait Real: RealField + Copy + FftNum + ToPrimitive + Default {
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("finite literal")
    }

    /// Converts a count into this scalar type.
    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as num_traits::FromPrimitive>::from_usize(n).expect("representable count")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("finite scalar")
    }

    /// Absolute value (named to avoid the `Signed`/`ComplexField` clash on `abs`).
    #[inline]
    fn magnitude(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `e^{jθ}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Modulus of a complex value.
#[inline]
pub fn modulus<T: Real>(z: Complex<T>) -> T {
    z.norm_sqr().sqrt()
}

/// Principal argument of a complex value.
#[inline]
pub fn argument<T: Real>(z: Complex<T>) -> T {
    z.im.atan2(z.re)
}

#[inline]
pub fn is_finite<T: Real>(z: Complex<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Converts a complex value between scalar types through `f64`.
#[inline]
pub fn convert_complex<A: Real, B: Real>(z: Complex<A>) -> Complex<B> {
    Complex::new(B::lit(z.re.as_f64()), B::lit(z.im.as_f64()))
}
