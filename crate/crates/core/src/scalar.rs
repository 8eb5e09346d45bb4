use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the integrators are generic over: f32 or f64.
pub trait Real: Float + FromPrimitive + Debug + Display + Sum + Send + Sync + 'static {
    /// Converts an f64 literal, rounding to the nearest representable value.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Default relative tolerance for stage solves: 1e-13 in double
    /// precision, a few hundred ulps in lower precision.
    fn default_solver_tol() -> Self {
        Self::lit(1e-13).max(Self::epsilon() * Self::lit(450.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::lit(x)
}
