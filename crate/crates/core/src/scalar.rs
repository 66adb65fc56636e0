//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt;

/// Real floating-point scalar (`f32` or `f64`) the solvers are generic over.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// Machine epsilon of the scalar type.
    fn machine_eps() -> Self;

    /// Floor used for tolerances that are stated for double precision:
    /// `max(tol, 64 eps)`.
    #[inline]
    fn tol(x: f64) -> Self {
        let t = Self::lit(x);
        let floor = Self::machine_eps() * Self::lit(64.0);
        if t > floor {
            t
        } else {
            floor
        }
    }
}

impl Real for f32 {
    fn machine_eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn machine_eps() -> Self {
        f64::EPSILON
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_floor_depends_on_precision() {
        assert_eq!(<f64 as Real>::tol(1e-12), 1e-12);
        assert!(<f32 as Real>::tol(1e-12) > 1e-6);
    }
}
