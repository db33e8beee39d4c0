//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All model math is written against [`Real`], so the same code runs in
//! `f32` (fast sweeps) and `f64` (calibration, oracles). Complex values are
//! plain [`num_complex::Complex`] pairs of the underlying real type.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar usable by the model, calibration and control code.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

pub type Cplx<T> = Complex<T>;

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Cplx<T> {
    Complex::new(re, im)
}

/// `sqrt(|z|^2 + eps^2)`, a modulus that is differentiable at the origin.
#[inline]
pub fn smooth_abs<T: Real>(z: Cplx<T>, eps: T) -> T {
    (z.norm_sqr() + eps * eps).sqrt()
}

#[inline]
pub fn smooth_abs_real<T: Real>(x: T, eps: T) -> T {
    (x * x + eps * eps).sqrt()
}
