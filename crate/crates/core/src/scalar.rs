//! Scalar abstraction: every solver is generic over the floating-point type.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the grid, fields and solvers are generic over.
///
/// `f64` is the type the command-line tool instantiates; `f32` is supported
/// for memory-bound experiments (expect looser tolerances).
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Conversion from an `f64` constant. Panics only if the value is not
    /// representable at all (never the case for f32/f64).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable in scalar type")
    }

    /// Widening conversion used for reports and serialization.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
