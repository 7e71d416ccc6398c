//! Scalar abstraction: the whole crate is generic over one floating-point
//! trait, instantiated in practice with `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used throughout the crate.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal must convert into the scalar type")
    }

    /// Lossy view as `f64`, for diagnostics and error messages.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + Default
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_conversion_roundtrips() {
        assert_eq!(f64::lit(0.25), 0.25);
        assert_eq!(f32::lit(0.25), 0.25_f32);
        assert_eq!(0.5_f64.as_f64(), 0.5);
    }
}
