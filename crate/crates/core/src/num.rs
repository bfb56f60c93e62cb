//! Scalar abstraction shared by the numeric kernels.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::Debug;
use std::iter::Sum;

/// Floating-point scalar used by similarity and metric kernels.
pub trait Real: Float + FromPrimitive + ToPrimitive + Sum + Debug + Send + Sync + 'static {
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to Real")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to Real")
    }
}

impl<T> Real for T where T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Send + Sync + 'static {}
