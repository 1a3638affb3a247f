//! Scalar abstractions shared by every module.
//!
//! Two layers:
//! * [`Real`] — a real floating type (`f32` or `f64`) used for weights,
//!   probabilities, bounds, and all special-function evaluation.
//! * [`Scalar`] — a measurement-data entry, either a [`Real`] itself or a
//!   complex number over one. Solvers only need modulus, conjugation, and
//!   scaling by reals, so real and complex instances share one code path.

use ndarray::LinalgScalar;
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real floating-point scalar (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant, panicking only for NaN (never produced by
    /// the literals this is used with). `f32` rounds to nearest.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable f64 constant")
    }

    /// Converts a count into the scalar type; exact for the sizes used here.
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("representable usize")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Entry of a measurement matrix or signal vector: real, or complex over a
/// [`Real`] base.
pub trait Scalar:
    LinalgScalar + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Base real type (modulus, norms, weights).
    type Real: Real;

    /// Embeds a real value (imaginary part zero in the complex case).
    fn from_real(r: Self::Real) -> Self;

    /// Complex conjugate; identity for real types.
    fn conj(self) -> Self;

    /// Squared modulus `|x|²` as a real.
    fn modulus_sq(self) -> Self::Real;

    /// Modulus `|x|` as a real.
    fn modulus(self) -> Self::Real {
        self.modulus_sq().sqrt()
    }

    /// Multiplies by a real scalar.
    fn scale(self, r: Self::Real) -> Self;

    /// Real part (the value itself for real types); Hermitian matrices have
    /// real diagonals, which factorizations rely on.
    fn real_part(self) -> Self::Real;

    /// Number of real dimensions per entry (1 for real, 2 for complex);
    /// block statistical dimensions use the real embedding.
    const REAL_DIM_FACTOR: usize;
}

impl<T: Real> Scalar for T {
    type Real = T;

    fn from_real(r: T) -> T {
        r
    }

    fn conj(self) -> T {
        self
    }

    fn modulus_sq(self) -> T {
        self * self
    }

    fn modulus(self) -> T {
        self.abs()
    }

    fn scale(self, r: T) -> T {
        self * r
    }

    fn real_part(self) -> T {
        self
    }

    const REAL_DIM_FACTOR: usize = 1;
}

impl<T: Real> Scalar for Complex<T> {
    type Real = T;

    fn from_real(r: T) -> Self {
        Complex::new(r, T::zero())
    }

    fn conj(self) -> Self {
        Complex::conj(&self)
    }

    fn modulus_sq(self) -> T {
        self.norm_sqr()
    }

    fn scale(self, r: T) -> Self {
        Complex::new(self.re * r, self.im * r)
    }

    fn real_part(self) -> T {
        self.re
    }

    const REAL_DIM_FACTOR: usize = 2;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_scalar_roundtrip() {
        let x = <f64 as Scalar>::from_real(-2.5);
        assert_eq!(x.conj(), -2.5);
        assert_eq!(x.modulus(), 2.5);
        assert_eq!(x.modulus_sq(), 6.25);
        assert_eq!(x.scale(2.0), -5.0);
    }

    #[test]
    fn complex_scalar_roundtrip() {
        let z = Complex::new(3.0_f64, -4.0);
        assert_eq!(Scalar::conj(z), Complex::new(3.0, 4.0));
        assert_eq!(z.modulus(), 5.0);
        assert_eq!(z.modulus_sq(), 25.0);
        assert_eq!(z.scale(0.5), Complex::new(1.5, -2.0));
        assert_eq!(<Complex<f64> as Scalar>::REAL_DIM_FACTOR, 2);
    }

    #[test]
    fn f32_constants_convert() {
        let x: f32 = Real::of(0.1);
        assert!((x - 0.1_f32).abs() < 1e-7);
    }
}
