//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar (`f32` or `f64`) accepted by the data model and solvers.
///
/// Parameters that describe an experiment (λ, ε, δ, tolerances) stay `f64`
/// everywhere; only data-carrying matrices are generic.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + FloatConst + LowerExp + Debug + Display
{
    /// Smallest orthonormality / rank tolerance that is meaningful at this precision.
    const ORTHO_TOL: f64;

    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    const ORTHO_TOL: f64 = 1e-4;

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const ORTHO_TOL: f64 = 1e-8;

    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
