//! Exact rational helpers.
//!
//! Every probability of an honest execution is a ratio of tape-pair counts, so the exact paths
//! of the crate work over [`Rational`] and only convert to `f64` for reporting and thresholds.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn ratio(num: i128, den: i128) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn from_counts(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Rational {
    Rational::new(num.into(), den.into())
}

pub fn int(v: i128) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn half() -> Rational {
    ratio(1, 2)
}

pub fn zero() -> Rational {
    Rational::zero()
}

pub fn one() -> Rational {
    Rational::one()
}

/// `2^-bits` as an exact rational.
pub fn pow2_inv(bits: u32) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << bits)
}

pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn abs(x: &Rational) -> Rational {
    x.abs()
}

/// The exact value of a finite `f64`.
pub fn from_f64(x: f64) -> Rational {
    Rational::from_float(x).expect("finite threshold")
}

/// `x >= threshold`, comparing against the exact dyadic value of the threshold.
///
/// Thresholds such as `1/(4 sqrt r)` only exist as `f64`; comparing exactly keeps every decision
/// reproducible and makes ties on representable thresholds count as crossings.
pub fn ge_threshold(x: &Rational, threshold: f64) -> bool {
    *x >= from_f64(threshold)
}

pub fn sum<'a>(items: impl IntoIterator<Item = &'a Rational>) -> Rational {
    items.into_iter().fold(Rational::zero(), |acc, x| acc + x)
}

/// Renders `n/d` (or `n` for integers) for logs and JSON.
pub fn display(x: &Rational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_comparison_is_exact_on_dyadics() {
        assert!(ge_threshold(&ratio(1, 2), 0.5));
        assert!(!ge_threshold(&ratio(1, 4), 0.25 + f64::EPSILON));
    }

    #[test]
    fn display_forms() {
        assert_eq!(display(&ratio(6, 8)), "3/4");
        assert_eq!(display(&int(2)), "2");
    }
}
