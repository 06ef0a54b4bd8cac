use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by the closed-form parts of the stack.
///
/// Implemented for `f32` and `f64`. Monte Carlo sampling always runs in
/// `f64`; the analytic formulas (entropy, channel loss, click
/// probabilities, decoy bounds, key length) are written against this trait.
pub trait Real: Float + FloatConst + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics only if the target type cannot
    /// represent finite `f64` values at all, which never happens for the
    /// built-in floats.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static {}
