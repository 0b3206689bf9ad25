//! Scalar abstraction shared by the analytical models.
//!
//! Byte counts, bandwidths, times and dollar costs are all real-valued and
//! carried by a single type parameter. `f64` is the default used by the
//! explorer; `f32` works for quick what-if runs.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point number usable by every model in this crate.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for finite inputs on IEEE types.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar conversion from f64")
    }

    /// Converts a count.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("scalar conversion from usize")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Bytes in one GB (decimal, matching GB/s link ratings).
pub const BYTES_PER_GB: f64 = 1e9;

/// `|a - b| <= rel * max(|a|, |b|)`, with exact equality covering zeros.
pub fn approx_eq_rel<F: Scalar>(a: F, b: F, rel: F) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}
