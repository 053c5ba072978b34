//! Exact arbitrary-precision rational scalars.
//!
//! Every scalar quantity in this crate — measure values, thresholds, slack
//! terms, search scores — is a [`Rat`]. There is no floating point anywhere
//! on a result path; comparisons are exact. The wire format is the string
//! `"p/q"` with `q > 0` and `gcd(p, q) = 1`.

use num::bigint::{BigInt, Sign};
use num::rational::BigRational;
use num::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

/// A reduced fraction with positive denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rat(BigRational);

impl Rat {
    pub fn zero() -> Self {
        Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Rat(BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }

    /// `p/q`, reduced. Panics if `q == 0`.
    pub fn ratio(p: i64, q: i64) -> Self {
        Rat(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    pub fn from_big(p: BigInt, q: BigInt) -> Self {
        Rat(BigRational::new(p, q))
    }

    /// `2^exp` for any integer exponent, exactly.
    pub fn pow2(exp: i64) -> Self {
        if exp >= 0 {
            Rat(BigRational::from_integer(BigInt::one() << exp as usize))
        } else {
            Rat(BigRational::new(BigInt::one(), BigInt::one() << (-exp) as usize))
        }
    }

    /// `n * 2^exp` for a machine integer `n`.
    pub fn dyadic(n: i64, exp: i64) -> Self {
        Rat::from_int(n) * Rat::pow2(exp)
    }

    pub fn abs(&self) -> Self {
        Rat(self.0.abs())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn square(&self) -> Self {
        self * self
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// True iff the denominator is a power of two.
    pub fn is_dyadic(&self) -> bool {
        let d = self.0.denom();
        if d.is_one() {
            return true;
        }
        let (sign, bytes) = d.to_bytes_le();
        debug_assert_eq!(sign, Sign::Plus);
        let mut ones = 0u32;
        for b in bytes {
            ones += b.count_ones();
        }
        ones == 1
    }

    /// Largest integer `k` with `k <= self`.
    pub fn floor_int(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    /// Smallest integer `k` with `k >= self`.
    pub fn ceil_int(&self) -> BigInt {
        self.0.ceil().to_integer()
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

/// Error parsing a `"p/q"` string.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational {input:?}: {reason}")]
pub struct ParseRatError {
    pub input: String,
    pub reason: String,
}

impl FromStr for Rat {
    type Err = ParseRatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ParseRatError {
            input: s.to_owned(),
            reason: reason.to_owned(),
        };
        let (p_str, q_str) = match s.split_once('/') {
            Some((p, q)) => (p, q),
            None => (s, "1"),
        };
        let p = BigInt::from_str(p_str.trim()).map_err(|_| err("bad numerator"))?;
        let q = BigInt::from_str(q_str.trim()).map_err(|_| err("bad denominator"))?;
        if q.is_zero() {
            return Err(err("zero denominator"));
        }
        Ok(Rat(BigRational::new(p, q)))
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat((self.0).$method(rhs.0))
            }
        }
        impl $trait<&Rat> for Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((self.0).$method(&rhs.0))
            }
        }
        impl $trait<Rat> for &Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat((&self.0).$method(rhs.0))
            }
        }
        impl $trait<&Rat> for &Rat {
            type Output = Rat;
            fn $method(self, rhs: &Rat) -> Rat {
                Rat((&self.0).$method(&rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl Neg for &Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-&self.0)
    }
}

impl AddAssign<&Rat> for Rat {
    fn add_assign(&mut self, rhs: &Rat) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&Rat> for Rat {
    fn sub_assign(&mut self, rhs: &Rat) {
        self.0 -= &rhs.0;
    }
}

impl From<i64> for Rat {
    fn from(n: i64) -> Self {
        Rat::from_int(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["0/1", "3/2", "-7/4", "19/20", "99/100"] {
            let r: Rat = s.parse().unwrap();
            assert_eq!(r.to_string(), s);
        }
        assert_eq!("6/4".parse::<Rat>().unwrap().to_string(), "3/2");
        assert_eq!("5".parse::<Rat>().unwrap().to_string(), "5/1");
        assert_eq!("-2/-4".parse::<Rat>().unwrap().to_string(), "1/2");
        assert!("1/0".parse::<Rat>().is_err());
        assert!("x/2".parse::<Rat>().is_err());
    }

    #[test]
    fn pow2_both_signs() {
        assert_eq!(Rat::pow2(3), Rat::from_int(8));
        assert_eq!(Rat::pow2(-3), Rat::ratio(1, 8));
        assert_eq!(Rat::pow2(0), Rat::one());
        // The scale that shows up in refusal reports.
        assert_eq!(Rat::pow2(-13), Rat::ratio(1, 8192));
    }

    #[test]
    fn thresholds_are_exact() {
        assert_eq!("19/20".parse::<Rat>().unwrap(), Rat::ratio(95, 100));
        assert_eq!(Rat::ratio(1, 10) + Rat::ratio(1, 20), Rat::ratio(3, 20));
        assert_eq!(Rat::ratio(3, 10) - Rat::ratio(1, 20), Rat::ratio(1, 4));
    }

    #[test]
    fn dyadic_detection() {
        assert!(Rat::ratio(3, 8).is_dyadic());
        assert!(Rat::from_int(5).is_dyadic());
        assert!(!Rat::ratio(1, 3).is_dyadic());
        assert!(!Rat::ratio(5, 48).is_dyadic());
    }
}
