//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{Complex, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point scalar: `f32` or `f64`.
///
/// Tolerances quoted throughout the crate (1e-10 unitarity, 1e-12 duality, ...)
/// are calibrated for `f64`; `f32` builds run the same code at reduced accuracy.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + LowerExp + Debug + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::lit(n as f64)
    }

    #[inline]
    fn of_i32(n: i32) -> Self {
        Self::lit(f64::from(n))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over a [`Real`] scalar.
pub type Cplx<T> = Complex<T>;

#[inline]
pub(crate) fn cplx<T: Real>(re: T, im: T) -> Cplx<T> {
    Complex::new(re, im)
}

/// `e^{i phi}`.
#[inline]
pub(crate) fn cis<T: Real>(phi: T) -> Cplx<T> {
    Complex::new(phi.cos(), phi.sin())
}

/// `|z|`, available for any [`Real`] without `Float` bounds.
#[inline]
pub fn cabs<T: Real>(z: Cplx<T>) -> T {
    z.re.hypot(z.im)
}

/// Principal argument of `z` in `(-pi, pi]`.
#[inline]
pub fn carg<T: Real>(z: Cplx<T>) -> T {
    z.im.atan2(z.re)
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(x: T) -> T {
    let two_pi = T::two_pi();
    let mut y = x % two_pi;
    if y > T::pi() {
        y -= two_pi;
    } else if y <= -T::pi() {
        y += two_pi;
    }
    y
}

/// Distance between two angles measured along the circle, in `[0, pi]`.
pub fn circular_distance<T: Real>(a: T, b: T) -> T {
    wrap_angle(a - b).abs()
}
