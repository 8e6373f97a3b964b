//! Exact rational helpers shared by every module.
//!
//! All certified quantities are kept as [`Rat`] (arbitrary precision
//! rationals). Square roots are only ever taken with a directed rounding so
//! that a bound never loses soundness.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Rat = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse `{0}` as an exact rational")]
pub struct ParseRatError(pub String);

pub fn int(v: i64) -> Rat {
    Rat::from_integer(BigInt::from(v))
}

pub fn ratio(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn pow2(exp: u32) -> BigInt {
    BigInt::one() << exp as usize
}

/// `raw · 2^{-frac_bits}` as an exact rational.
pub fn dyadic(raw: impl Into<BigInt>, frac_bits: u32) -> Rat {
    Rat::new(raw.into(), pow2(frac_bits))
}

/// Exact conversion of a finite `f64`.
pub fn from_f64(v: f64) -> Option<Rat> {
    Rat::from_float(v)
}

pub fn to_f64(v: &Rat) -> f64 {
    // Scale so that both halves fit in f64 range before dividing.
    if let (Some(n), Some(d)) = (v.numer().to_f64(), v.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    let shift = v.denom().bits() as i64 - 60;
    let n = v.numer() >> shift.max(0) as usize;
    let d = v.denom() >> shift.max(0) as usize;
    n.to_f64().unwrap_or(f64::NAN) / d.to_f64().unwrap_or(f64::NAN)
}

/// Parses `a/b`, plain integers and decimal literals such as `6.8949e-4`.
/// Decimal literals are converted exactly (no binary rounding).
pub fn parse_rat(s: &str) -> Result<Rat, ParseRatError> {
    let err = || ParseRatError(s.to_string());
    let t = s.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n = BigInt::from_str(n.trim()).map_err(|_| err())?;
        let d = BigInt::from_str(d.trim()).map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rat::new(n, d));
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().map_err(|_| err())?),
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (ip, fp) = body.split_once('.').unwrap_or((body, ""));
    if ip.is_empty() && fp.is_empty() {
        return Err(err());
    }
    if !ip.chars().chain(fp.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let digits = format!("{ip}{fp}");
    let mut num = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).map_err(|_| err())?;
    if neg {
        num = -num;
    }
    let scale = exp - fp.len() as i32;
    let ten = BigInt::from(10);
    Ok(if scale >= 0 {
        Rat::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        Rat::new(num, num_traits::pow(ten, (-scale) as usize))
    })
}

/// `num/den` rendering used in every machine-readable output.
pub fn to_ratio_string(v: &Rat) -> String {
    format!("{}/{}", v.numer(), v.denom())
}

/// Exact decimal expansion when the denominator is of the form `2^a 5^b`;
/// `None` otherwise.
pub fn to_exact_decimal(v: &Rat) -> Option<String> {
    let mut den = v.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let (mut twos, mut fives) = (0usize, 0usize);
    while den.is_even() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return None;
    }
    let places = twos.max(fives);
    let scaled = v.numer() * num_traits::pow(BigInt::from(10), places) / v.denom();
    Some(insert_point(&scaled, places))
}

fn insert_point(scaled: &BigInt, places: usize) -> String {
    let neg = scaled.sign() == Sign::Minus;
    let mut digits = scaled.abs().to_string();
    if places == 0 {
        return if neg { format!("-{digits}") } else { digits };
    }
    if digits.len() <= places {
        digits = format!("{}{}", "0".repeat(places + 1 - digits.len()), digits);
    }
    let (i, f) = digits.split_at(digits.len() - places);
    format!("{}{}.{}", if neg { "-" } else { "" }, i, f)
}

/// Decimal rendering in scientific notation with `sig` significant digits,
/// rounded to nearest.
pub fn to_sci(v: &Rat, sig: usize) -> String {
    if v.is_zero() {
        return "0".to_string();
    }
    let neg = v.is_negative();
    let a = v.abs();
    let ten = Rat::from_integer(BigInt::from(10));
    let mut exp: i32 = (to_f64(&a).log10().floor()) as i32;
    let scaled = |e: i32| -> Rat {
        let s = sig as i32 - 1 - e;
        if s >= 0 {
            &a * num_traits::pow(ten.clone(), s as usize)
        } else {
            &a / num_traits::pow(ten.clone(), (-s) as usize)
        }
    };
    let mut m = scaled(exp).round().to_integer();
    let limit = num_traits::pow(BigInt::from(10), sig);
    if m >= limit {
        exp += 1;
        m = scaled(exp).round().to_integer();
    } else if m < num_traits::pow(BigInt::from(10), sig - 1) {
        exp -= 1;
        m = scaled(exp).round().to_integer();
    }
    let digits = m.to_string();
    let body = if sig > 1 {
        format!("{}.{}", &digits[..1], &digits[1..])
    } else {
        digits
    };
    format!("{}{}e{}", if neg { "-" } else { "" }, body, exp)
}

/// Rational upper bound on `sqrt(v)` with absolute error below `2^{-bits}`.
pub fn sqrt_upper(v: &Rat, bits: u32) -> Rat {
    let lo = sqrt_lower(v, bits);
    if &(&lo * &lo) == v {
        lo
    } else {
        lo + dyadic(1, bits)
    }
}

/// Rational lower bound on `sqrt(v)` with absolute error below `2^{-bits}`.
pub fn sqrt_lower(v: &Rat, bits: u32) -> Rat {
    assert!(!v.is_negative(), "square root of a negative rational");
    // floor(sqrt(floor(v · 4^bits))) / 2^bits
    let scaled = (v * Rat::from_integer(pow2(2 * bits))).floor().to_integer();
    dyadic(scaled.sqrt(), bits)
}

/// Serde adapter storing a rational as `{"exact": "num/den", "decimal": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exact(pub Rat);

impl Exact {
    pub fn decimal(&self) -> String {
        to_sci(&self.0, 8)
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.decimal())
    }
}

impl From<Rat> for Exact {
    fn from(v: Rat) -> Self {
        Exact(v)
    }
}

#[derive(Serialize, Deserialize)]
struct ExactRepr {
    exact: String,
    decimal: String,
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ExactRepr {
            exact: to_ratio_string(&self.0),
            decimal: self.decimal(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = ExactRepr::deserialize(d)?;
        parse_rat(&repr.exact)
            .map(Exact)
            .map_err(serde::de::Error::custom)
    }
}
