//! Scalar abstraction for the numeric parts of the crate.
//!
//! Feature values, dimension scores, shift statistics and clustering heights
//! are all generic over [`Scalar`], so the pipeline can run in `f32` or `f64`.
//! The crate root exposes `f64` aliases for the common case.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type usable throughout the pipeline.
pub trait Scalar:
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
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 is representable in every Scalar")
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().copied().sum::<T>() / T::of_usize(values.len()))
}

/// Sample standard deviation (n - 1 denominator); `None` for fewer than two values.
pub fn sample_sd<T: Scalar>(values: &[T]) -> Option<T> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: T = values.iter().map(|&v| (v - m) * (v - m)).sum();
    Some((ss / T::of_usize(values.len() - 1)).sqrt())
}

/// Euclidean norm.
pub fn norm<T: Scalar>(values: &[T]) -> T {
    values.iter().map(|&v| v * v).sum::<T>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let xs = [0.0f64, 0.0, 10.0, 10.0];
        assert_eq!(mean(&xs), Some(5.0));
        assert!((sample_sd(&xs).unwrap() - 5.773_502_691_896_258).abs() < 1e-12);
        assert_eq!(sample_sd(&[1.0f32]), None);
        assert_eq!(norm(&[3.0f32, 4.0]), 5.0);
    }
}
