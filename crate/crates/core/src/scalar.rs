//! Scalar abstractions shared by the geometric and counting kernels.
//!
//! Geometry (homographies, rigid fits, angles) is written against [`Real`],
//! which is satisfied by `f32` and `f64`. Mask statistics only ever divide
//! pixel counts, so they are written against [`Field`], which additionally
//! admits exact rationals.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Floating point scalar usable with nalgebra decompositions.
pub trait Real: nalgebra::RealField + Copy + FromPrimitive + ToPrimitive {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Converts `T` back to `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

/// Ordered field in which count ratios can be formed.
pub trait Field: Num + Copy + PartialOrd + Debug {
    fn from_count(n: u64) -> Self;
}

impl Field for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }
}

impl Field for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
}

impl Field for Ratio<i64> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(i64::try_from(n).expect("count exceeds i64"))
    }
}

impl Field for Ratio<i128> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(i128::from(n))
    }
}

/// Median of a slice; the mean of the two central values for even lengths.
///
/// Returns `None` for an empty slice or when any value is NaN.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[1.0, f64::NAN]), None);
    }

    #[test]
    fn rational_counts_are_exact() {
        let third = Ratio::<i64>::from_count(1) / Ratio::from_count(3);
        assert_eq!(third * Ratio::from_count(3), Ratio::from_count(1));
    }

    #[test]
    fn lit_roundtrip() {
        let x: f32 = lit(0.25);
        assert_eq!(to_f64(x), 0.25);
    }
}
