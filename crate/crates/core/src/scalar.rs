//! Exact rational scalars used throughout the finite-system pathway.
//!
//! Finite systems are computed entirely in arbitrary-precision rational
//! arithmetic so that measure identities and coboundary residuals can be
//! asserted with equality rather than tolerances. Circle systems use `f64`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Exact rational scalar.
pub type Q = BigRational;

/// Rational from an integer pair.
pub fn q(numer: i64, denom: i64) -> Q {
    Q::new(BigInt::from(numer), BigInt::from(denom))
}

/// Rational from an integer.
pub fn q_int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q_zero() -> Q {
    Q::zero()
}

pub fn q_one() -> Q {
    Q::one()
}

/// 2^k as a rational, for any signed exponent.
pub fn q_pow2(k: i64) -> Q {
    let mag = BigInt::one() << k.unsigned_abs() as usize;
    if k >= 0 {
        Q::from_integer(mag)
    } else {
        Q::new(BigInt::one(), mag)
    }
}

/// Exact conversion of a finite `f64` to a (dyadic) rational.
///
/// Every finite float is exactly representable, so no rounding occurs here.
pub fn q_from_f64(x: f64) -> Option<Q> {
    Q::from_float(x)
}

pub fn q_to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn q_abs(x: &Q) -> Q {
    x.abs()
}

/// Parses "p/q", "p", or a decimal-free integer string.
pub fn q_parse(s: &str) -> Option<Q> {
    let s = s.trim();
    if let Ok(r) = s.parse::<Q>() {
        return Some(r);
    }
    // Fall back to float syntax ("0.25"), converted exactly.
    s.parse::<f64>().ok().and_then(q_from_f64)
}

/// |a - b| <= tol, with `tol` given as a float.
pub fn q_close(a: &Q, b: &Q, tol: f64) -> bool {
    let t = q_from_f64(tol).unwrap_or_else(Q::zero);
    (a - b).abs() <= t
}

/// Wraps a circle coordinate into [0, 1).
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance between two points of the circle R/Z.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (wrap_unit(a) - wrap_unit(b)).abs();
    d.min(1.0 - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow2_signed() {
        assert_eq!(q_pow2(0), q_int(1));
        assert_eq!(q_pow2(3), q_int(8));
        assert_eq!(q_pow2(-2), q(1, 4));
    }

    #[test]
    fn dyadic_conversion_is_exact() {
        assert_eq!(q_from_f64(0.5).unwrap(), q(1, 2));
        assert_eq!(q_from_f64(0.375).unwrap(), q(3, 8));
        // 0.1 is not a decimal fraction in binary; the conversion keeps the
        // actual float value, not 1/10.
        assert_ne!(q_from_f64(0.1).unwrap(), q(1, 10));
    }

    #[test]
    fn parse_forms() {
        assert_eq!(q_parse("3/4").unwrap(), q(3, 4));
        assert_eq!(q_parse("-2").unwrap(), q_int(-2));
        assert_eq!(q_parse("0.25").unwrap(), q(1, 4));
        assert!(q_parse("abc").is_none());
    }

    #[test]
    fn wrap_and_distance() {
        assert_eq!(wrap_unit(1.25), 0.25);
        assert_eq!(wrap_unit(-0.25), 0.75);
        assert!((circle_dist(0.95, 0.05) - 0.1).abs() < 1e-15);
    }
}
