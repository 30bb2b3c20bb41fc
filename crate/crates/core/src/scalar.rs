//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point type the simulator is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal or parameter.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real")
    }

    fn to64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    /// A requested tolerance, raised to what this precision can actually resolve.
    fn tolerance(requested: f64) -> Self {
        let floor = Self::epsilon().to64() * 64.0;
        Self::of(requested.max(floor))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex amplitude over a [`Real`] scalar.
pub type Cx<T> = Complex<T>;

#[cfg(test)]
pub(crate) fn cx<T: Real>(re: f64, im: f64) -> Cx<T> {
    Complex::new(T::of(re), T::of(im))
}

#[inline]
pub(crate) fn czero<T: Real>() -> Cx<T> {
    Complex::new(T::zero(), T::zero())
}

/// Squared 2-norm of an amplitude slice.
pub fn norm_sqr<T: Real>(v: &[Cx<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨a|b⟩` with the first argument conjugated.
pub fn inner<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> Cx<T> {
    a.iter()
        .zip(b)
        .fold(czero(), |acc, (x, y)| acc + x.conj() * y)
}

pub(crate) fn all_finite<T: Real>(v: &[Cx<T>]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
