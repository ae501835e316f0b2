//! Scalar abstraction for the double and extended (double-double) evaluation paths.
//!
//! `DoubleDouble` carries an unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`,
//! giving roughly 106 bits of significand. Only the field operations and the
//! square root are provided; that is all the map evaluation, derivative
//! products and residual checks need.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};

use num_complex::Complex;
use num_traits::{Num, One, Zero};
use serde::{Deserialize, Serialize};

use crate::map::C64;

/// Which arithmetic backs an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
    Extended,
}

pub trait Real:
    Num + Copy + Neg<Output = Self> + PartialOrd + Send + Sync + fmt::Debug + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;

    fn abs(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

pub fn lift<T: Real>(c: C64) -> Complex<T> {
    Complex::new(T::from_f64(c.re), T::from_f64(c.im))
}

pub fn lower<T: Real>(c: Complex<T>) -> C64 {
    C64::new(c.re.to_f64(), c.im.to_f64())
}

/// Modulus of a complex number in the scalar type, rounded to f64.
pub fn modulus<T: Real>(c: Complex<T>) -> f64 {
    lower(c).norm()
}

#[derive(Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const fn new(hi: f64) -> Self {
        Self { hi, lo: 0.0 }
    }

    pub fn from_parts(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        Self::from_parts(p, e)
    }

    fn trunc(self) -> Self {
        let hi = self.hi.trunc();
        if hi == self.hi {
            Self::from_parts(hi, self.lo.trunc())
        } else {
            Self::new(hi)
        }
    }
}

impl fmt::Debug for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DD({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.hi + self.lo)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::new(q3)
    }
}

impl Rem for DoubleDouble {
    type Output = Self;
    fn rem(self, b: Self) -> Self {
        self - b * (self / b).trunc()
    }
}

impl Zero for DoubleDouble {
    fn zero() -> Self {
        Self::new(0.0)
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0 && self.lo == 0.0
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        Self::new(1.0)
    }
}

impl Num for DoubleDouble {
    type FromStrRadixErr = std::num::ParseFloatError;
    fn from_str_radix(s: &str, radix: u32) -> std::result::Result<Self, Self::FromStrRadixErr> {
        if radix != 10 {
            // Only decimal input is meaningful here; fall through to a parse error.
            return "not-a-decimal".parse::<f64>().map(Self::new);
        }
        s.parse::<f64>().map(Self::new)
    }
}

impl Real for DoubleDouble {
    fn from_f64(x: f64) -> Self {
        Self::new(x)
    }
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Self::zero();
        }
        // One Newton correction of the double estimate doubles the precision.
        let x = self.hi.sqrt();
        let (p, e) = two_prod(x, x);
        let resid = (self.hi - p - e + self.lo) / (2.0 * x);
        Self::from_parts(x, resid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn third_is_more_accurate_than_double() {
        let three = DoubleDouble::new(3.0);
        let third = DoubleDouble::one() / three;
        let back = third * three - DoubleDouble::one();
        assert!(back.to_f64().abs() < 1e-31, "{back:?}");
    }

    #[test]
    fn sqrt_two_squared() {
        let two = DoubleDouble::new(2.0);
        let r = two.sqrt();
        let err = r * r - two;
        assert!(err.to_f64().abs() < 1e-30);
    }

    #[test]
    fn captures_cancellation_lost_in_double() {
        let big = DoubleDouble::new(1e16);
        let x = big + DoubleDouble::one() - big;
        assert_eq!(x.to_f64(), 1.0);
        assert_eq!(1e16_f64 + 1.0 - 1e16, 0.0);
    }

    #[test]
    fn complex_arithmetic_compiles_and_agrees() {
        let a = Complex::new(DoubleDouble::new(1.5), DoubleDouble::new(-0.25));
        let b = Complex::new(DoubleDouble::new(0.5), DoubleDouble::new(2.0));
        let p = lower(a * b / b);
        assert!((p - C64::new(1.5, -0.25)).norm() < 1e-30);
    }

    #[test]
    fn remainder() {
        let r = DoubleDouble::new(7.5) % DoubleDouble::new(2.0);
        assert_eq!(r.to_f64(), 1.5);
    }
}
