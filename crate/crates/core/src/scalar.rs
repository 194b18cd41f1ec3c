use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point element type shared by every numeric routine in the crate.
///
/// Implemented for `f32` and `f64`. The tolerances scale with the precision of
/// the type; the `f64` values are the contractual ones.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Maximum Frobenius residual `‖RᵀR − I‖` (and `|det R − 1|`) accepted for a rotation.
    fn ortho_tol() -> Self;

    /// Relative threshold under which a singular value counts as zero.
    fn rank_tol() -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn ortho_tol() -> Self {
        1e-9
    }

    fn rank_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn ortho_tol() -> Self {
        1e-4
    }

    fn rank_tol() -> Self {
        1e-6
    }
}
