//! Numeric field abstraction shared by the exact (rational) and floating-point
//! code paths of the factorial-moment and moment-recursion engines.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

pub trait Scalar:
    Num + Clone + Debug + PartialOrd + std::ops::Neg<Output = Self> + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn from_u64(n: u64) -> Self;
    fn to_f64(&self) -> f64;
    /// Magnitude used for pivot selection.
    fn magnitude(&self) -> f64 {
        self.to_f64().abs()
    }
    fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..k {
            acc = acc * self.clone();
        }
        acc
    }
    /// True for exact arithmetic, where zero tests are meaningful.
    fn is_exact() -> bool;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_u64(n: u64) -> Self {
        n as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn pow(&self, k: u32) -> Self {
        self.powi(k as i32)
    }
    fn is_exact() -> bool {
        false
    }
}

impl Scalar for BigRational {
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite float")
    }
    fn from_u64(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn magnitude(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            // Rationals are never tiny-but-nonzero for pivoting purposes.
            Scalar::to_f64(&self.abs()).max(f64::MIN_POSITIVE)
        }
    }
    fn is_exact() -> bool {
        true
    }
}

/// Rational from a decimal string such as "1.25" or "5/4".
pub fn rational(s: &str) -> BigRational {
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().expect("integer numerator");
        let d: BigInt = d.trim().parse().expect("integer denominator");
        return BigRational::new(n, d);
    }
    let s = s.trim();
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let digits: BigInt = format!("{int}{frac}").parse().expect("decimal literal");
    let scale = BigInt::from(10u32).pow(frac.len() as u32);
    BigRational::new(digits, scale)
}

pub fn one<S: Scalar>() -> S {
    S::one()
}

pub fn falling_factorial(x: u64, r: usize) -> f64 {
    (0..r as u64).fold(1.0, |acc, i| if x < i { 0.0 } else { acc * (x - i) as f64 })
}

pub fn factorial(r: usize) -> u64 {
    (1..=r as u64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_parsing() {
        assert_eq!(rational("1.25"), BigRational::new(5.into(), 4.into()));
        assert_eq!(rational("3/6"), BigRational::new(1.into(), 2.into()));
        assert_eq!(rational("2"), BigRational::from_integer(2.into()));
    }

    #[test]
    fn falling() {
        assert_eq!(falling_factorial(5, 3), 60.0);
        assert_eq!(falling_factorial(2, 3), 0.0);
        assert_eq!(falling_factorial(0, 0), 1.0);
    }
}
