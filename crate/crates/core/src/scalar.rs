use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the analytic routines are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances throughout the crate are
/// written as `f64` literals and passed through [`Scalar::tol`], which raises
/// them to a floor proportional to the machine epsilon of the type so that
/// single precision degrades gracefully instead of failing every check.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable in scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    /// Tolerance `x`, floored at `1e4` machine epsilons.
    fn tol(x: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(1e4);
        let t = Self::lit(x);
        if t > floor {
            t
        } else {
            floor
        }
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_floor() {
        assert_eq!(<f64 as Scalar>::tol(1e-9), 1e-9);
        assert!(<f32 as Scalar>::tol(1e-9) > 1e-4);
        assert!(<f64 as Scalar>::tol(1e-20) > 1e-13);
    }
}
