//! Exact decimal arithmetic for times, probabilities and influence factors.
//!
//! Every quantity in a scenario is written as a finite decimal, and every
//! operation the planner performs on them (sums, products, `1 - x`) keeps the
//! result a finite decimal. Backing the type with a big rational means
//! comparisons and equality are exact, so a P-value of `0.684` really is
//! `0.684` and golden files never drift.

use std::fmt;
use std::iter::{Product, Sum};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Exact(BigRational);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid decimal literal `{0}`")]
pub struct ParseExactError(pub String);

impl Exact {
    pub fn zero() -> Self {
        Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Exact(BigRational::one())
    }

    pub fn from_int(v: i64) -> Self {
        Exact(BigRational::from_integer(BigInt::from(v)))
    }

    /// `num / 10^scale`, e.g. `from_scaled(684, 3)` is `0.684`.
    pub fn from_scaled(num: i64, scale: u32) -> Self {
        let den = BigInt::from(10u32).pow(scale);
        Exact(BigRational::new(BigInt::from(num), den))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Integer part if the value is integral.
    pub fn to_integer(&self) -> Option<i64> {
        if self.0.is_integer() {
            self.0.to_integer().to_i64()
        } else {
            None
        }
    }

    /// `1 - self`
    pub fn complement(&self) -> Self {
        Exact(BigRational::one() - &self.0)
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Number of fractional decimal digits needed to print the value, or
    /// `None` when the expansion does not terminate.
    fn decimal_scale(&self) -> Option<u32> {
        let mut den = self.0.denom().clone();
        let two = BigInt::from(2u32);
        let five = BigInt::from(5u32);
        let (mut twos, mut fives) = (0u32, 0u32);
        while den.is_even() {
            den /= &two;
            twos += 1;
        }
        while (&den % &five).is_zero() {
            den /= &five;
            fives += 1;
        }
        den.is_one().then_some(twos.max(fives))
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Some(scale) = self.decimal_scale() else {
            return write!(f, "{}/{}", self.0.numer(), self.0.denom());
        };
        if scale == 0 {
            return write!(f, "{}", self.0.numer());
        }
        let factor = BigInt::from(10u32).pow(scale);
        let scaled = (&self.0 * BigRational::from_integer(factor.clone())).to_integer();
        let neg = scaled.is_negative();
        let digits = scaled.abs().to_string();
        let width = scale as usize + 1;
        let padded = format!("{digits:0>width$}");
        let (int, frac) = padded.split_at(padded.len() - scale as usize);
        let frac = frac.trim_end_matches('0');
        if neg {
            write!(f, "-")?;
        }
        if frac.is_empty() {
            write!(f, "{int}")
        } else {
            write!(f, "{int}.{frac}")
        }
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Exact {
    type Err = ParseExactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseExactError(s.to_string());
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int, frac) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return Err(err());
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let digits = format!("{int}{frac}");
        let mut num: BigInt = digits.parse().map_err(|_| err())?;
        if neg {
            num = -num;
        }
        let den = BigInt::from(10u32).pow(frac.len() as u32);
        Ok(Exact(BigRational::new(num, den)))
    }
}

impl From<i64> for Exact {
    fn from(v: i64) -> Self {
        Exact::from_int(v)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Exact {
            type Output = Exact;
            fn $method(self, rhs: Exact) -> Exact {
                Exact(self.0.$method(rhs.0))
            }
        }
        impl<'a> $trait<&'a Exact> for Exact {
            type Output = Exact;
            fn $method(self, rhs: &'a Exact) -> Exact {
                Exact(self.0.$method(&rhs.0))
            }
        }
        impl<'a> $trait<&'a Exact> for &'a Exact {
            type Output = Exact;
            fn $method(self, rhs: &'a Exact) -> Exact {
                Exact((&self.0).$method(&rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);

impl AddAssign<&Exact> for Exact {
    fn add_assign(&mut self, rhs: &Exact) {
        self.0 += &rhs.0;
    }
}

impl Neg for Exact {
    type Output = Exact;
    fn neg(self) -> Exact {
        Exact(-self.0)
    }
}

impl Sum for Exact {
    fn sum<I: Iterator<Item = Exact>>(iter: I) -> Exact {
        iter.fold(Exact::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Exact> for Exact {
    fn sum<I: Iterator<Item = &'a Exact>>(iter: I) -> Exact {
        iter.fold(Exact::zero(), |acc, x| acc + x)
    }
}

impl Product for Exact {
    fn product<I: Iterator<Item = Exact>>(iter: I) -> Exact {
        iter.fold(Exact::one(), |acc, x| acc * x)
    }
}

impl<'a> Product<&'a Exact> for Exact {
    fn product<I: Iterator<Item = &'a Exact>>(iter: I) -> Exact {
        iter.fold(Exact::one(), |acc, x| acc * x)
    }
}

/// Shorthand for literals in code and tests: `dec("0.684")`.
///
/// Panics on malformed input; only use with constant strings.
pub fn dec(s: &str) -> Exact {
    s.parse().expect("valid decimal literal")
}
