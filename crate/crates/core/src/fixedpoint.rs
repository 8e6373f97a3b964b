//! Signed `(p.q)` fixed-point arithmetic with exact error shadows.
//!
//! Every [`Tracked`] value carries the fixed-point result that the target
//! hardware would hold together with the exact rational value the same
//! computation would produce without any rounding. `err = shadow − value`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{dyadic, pow2, Rat};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FxError {
    #[error("invalid fixed-point format p={p}, q={q}: need p + q + 1 <= 63")]
    InvalidFormat { p: u32, q: u32 },
    #[error("overflow in {op}: raw {raw} does not fit {fmt}")]
    Overflow {
        op: &'static str,
        raw: String,
        fmt: FxFormat,
    },
    #[error("format mismatch: {0} vs {1}")]
    FormatMismatch(FxFormat, FxFormat),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("clamp bounds out of order")]
    InvalidBounds,
    #[error("cannot parse `{0}`")]
    Parse(String),
}

/// Signed fixed-point format with `p` integer bits and `q` fractional bits.
/// The sign bit is implicit, so a value occupies `p + q + 1` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FormatRepr", into = "FormatRepr")]
pub struct FxFormat {
    p: u32,
    q: u32,
}

#[derive(Serialize, Deserialize)]
struct FormatRepr {
    p: u32,
    q: u32,
}

impl TryFrom<FormatRepr> for FxFormat {
    type Error = FxError;
    fn try_from(r: FormatRepr) -> Result<Self, FxError> {
        FxFormat::new(r.p, r.q)
    }
}

impl From<FxFormat> for FormatRepr {
    fn from(f: FxFormat) -> Self {
        FormatRepr { p: f.p, q: f.q }
    }
}

impl FxFormat {
    pub fn new(p: u32, q: u32) -> Result<Self, FxError> {
        if p + q + 1 > 63 {
            return Err(FxError::InvalidFormat { p, q });
        }
        Ok(Self { p, q })
    }

    pub fn p(self) -> u32 {
        self.p
    }

    pub fn q(self) -> u32 {
        self.q
    }

    /// Exclusive bound on `|raw|`.
    pub fn raw_limit(self) -> i64 {
        1i64 << (self.p + self.q)
    }

    pub fn ulp(self) -> Rat {
        dyadic(1, self.q)
    }

    pub fn fits(self, raw: i128) -> bool {
        raw.unsigned_abs() < self.raw_limit() as u128
    }

    pub(crate) fn check(self, op: &'static str, raw: i128) -> Result<i64, FxError> {
        if self.fits(raw) {
            Ok(raw as i64)
        } else {
            Err(FxError::Overflow {
                op,
                raw: raw.to_string(),
                fmt: self,
            })
        }
    }
}

impl fmt::Display for FxFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}.q{}", self.p, self.q)
    }
}

/// Accepts both `pN.qM` and the bare `N.M` used on the command line.
impl FromStr for FxFormat {
    type Err = FxError;
    fn from_str(s: &str) -> Result<Self, FxError> {
        let bad = || FxError::Parse(s.to_string());
        let (a, b) = s.split_once('.').ok_or_else(bad)?;
        let a = a.strip_prefix('p').unwrap_or(a);
        let b = b.strip_prefix('q').unwrap_or(b);
        FxFormat::new(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundingMode {
    /// Round toward −∞ (arithmetic right shift).
    #[default]
    Floor,
    TowardZero,
    /// Round to nearest, ties toward +∞ (add half an ulp, then shift).
    Nearest,
}

impl RoundingMode {
    /// Rounds `v · 2^{-bits}` to an integer.
    pub fn shift(self, v: i128, bits: u32) -> i128 {
        if bits == 0 {
            return v;
        }
        match self {
            RoundingMode::Floor => v >> bits,
            RoundingMode::TowardZero => {
                if v < 0 {
                    -((-v) >> bits)
                } else {
                    v >> bits
                }
            }
            RoundingMode::Nearest => (v + (1i128 << (bits - 1))) >> bits,
        }
    }

    pub fn round(self, x: &Rat) -> BigInt {
        match self {
            RoundingMode::Floor => x.floor().to_integer(),
            RoundingMode::TowardZero => x.trunc().to_integer(),
            RoundingMode::Nearest => (x + Rat::new(1.into(), 2.into())).floor().to_integer(),
        }
    }

    /// Largest magnitude of a single rounding error, in ulps.
    pub fn max_error_ulps(self) -> Rat {
        match self {
            RoundingMode::Floor | RoundingMode::TowardZero => Rat::from_integer(1.into()),
            RoundingMode::Nearest => Rat::new(1.into(), 2.into()),
        }
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoundingMode::Floor => "floor",
            RoundingMode::TowardZero => "toward-zero",
            RoundingMode::Nearest => "nearest",
        })
    }
}

impl FromStr for RoundingMode {
    type Err = FxError;
    fn from_str(s: &str) -> Result<Self, FxError> {
        match s {
            "floor" => Ok(RoundingMode::Floor),
            "toward-zero" => Ok(RoundingMode::TowardZero),
            "nearest" => Ok(RoundingMode::Nearest),
            _ => Err(FxError::Parse(s.to_string())),
        }
    }
}

/// A fixed-point number `raw · 2^{-q}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxValue {
    raw: i64,
    fmt: FxFormat,
}

impl FxValue {
    pub fn from_raw(raw: i64, fmt: FxFormat) -> Result<Self, FxError> {
        fmt.check("from_raw", raw as i128).map(|raw| Self { raw, fmt })
    }

    pub fn zero(fmt: FxFormat) -> Self {
        Self { raw: 0, fmt }
    }

    pub fn quantize(x: &Rat, fmt: FxFormat, mode: RoundingMode) -> Result<Self, FxError> {
        let scaled = x * Rat::from_integer(pow2(fmt.q));
        let raw = mode.round(&scaled);
        let raw = raw.to_i128().filter(|r| fmt.fits(*r)).ok_or_else(|| FxError::Overflow {
            op: "quantize",
            raw: raw.to_string(),
            fmt,
        })?;
        Ok(Self {
            raw: raw as i64,
            fmt,
        })
    }

    pub fn raw(self) -> i64 {
        self.raw
    }

    pub fn fmt(self) -> FxFormat {
        self.fmt
    }

    pub fn to_rat(self) -> Rat {
        dyadic(self.raw, self.fmt.q)
    }

    /// Re-expresses the value in another format. Exact whenever
    /// `to.q >= self.q`; otherwise rounded with `mode`.
    pub fn convert(self, to: FxFormat, mode: RoundingMode) -> Result<Self, FxError> {
        let raw = if to.q >= self.fmt.q {
            (self.raw as i128) << (to.q - self.fmt.q)
        } else {
            mode.shift(self.raw as i128, self.fmt.q - to.q)
        };
        to.check("convert", raw).map(|raw| Self { raw, fmt: to })
    }
}

impl fmt::Display for FxValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.raw, self.fmt)
    }
}

impl FromStr for FxValue {
    type Err = FxError;
    fn from_str(s: &str) -> Result<Self, FxError> {
        let (raw, fmt) = s.split_once('@').ok_or_else(|| FxError::Parse(s.to_string()))?;
        let raw: i64 = raw.parse().map_err(|_| FxError::Parse(s.to_string()))?;
        FxValue::from_raw(raw, fmt.parse()?)
    }
}

impl Serialize for FxValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FxValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Fixed-point value paired with its exact counterpart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tracked {
    fx: FxValue,
    shadow: Rat,
}

impl Tracked {
    /// A freshly loaded value: the shadow equals the value, `err = 0`.
    pub fn exact(fx: FxValue) -> Self {
        Self {
            shadow: fx.to_rat(),
            fx,
        }
    }

    pub fn with_shadow(fx: FxValue, shadow: Rat) -> Self {
        Self { fx, shadow }
    }

    pub fn zero(fmt: FxFormat) -> Self {
        Self::exact(FxValue::zero(fmt))
    }

    pub fn fx(&self) -> FxValue {
        self.fx
    }

    pub fn raw(&self) -> i64 {
        self.fx.raw
    }

    pub fn fmt(&self) -> FxFormat {
        self.fx.fmt
    }

    pub fn value(&self) -> Rat {
        self.fx.to_rat()
    }

    /// `exact(r)`: the error-free counterpart.
    pub fn shadow(&self) -> &Rat {
        &self.shadow
    }

    /// `err(r) = exact(r) − r`.
    pub fn err(&self) -> Rat {
        &self.shadow - self.value()
    }

    /// Drops the accumulated error: the shadow is reset to the value.
    pub fn forget_err(&self) -> Self {
        Self::exact(self.fx)
    }

    fn same_fmt(&self, other: &Self) -> Result<FxFormat, FxError> {
        if self.fmt() == other.fmt() {
            Ok(self.fmt())
        } else {
            Err(FxError::FormatMismatch(self.fmt(), other.fmt()))
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, FxError> {
        let fmt = self.same_fmt(other)?;
        let raw = fmt.check("add", self.raw() as i128 + other.raw() as i128)?;
        Ok(Self {
            fx: FxValue { raw, fmt },
            shadow: &self.shadow + &other.shadow,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FxError> {
        let fmt = self.same_fmt(other)?;
        let raw = fmt.check("sub", self.raw() as i128 - other.raw() as i128)?;
        Ok(Self {
            fx: FxValue { raw, fmt },
            shadow: &self.shadow - &other.shadow,
        })
    }

    pub fn neg(&self) -> Self {
        // |raw| < 2^{p+q} is symmetric, so negation never overflows.
        Self {
            fx: FxValue {
                raw: -self.raw(),
                fmt: self.fmt(),
            },
            shadow: -&self.shadow,
        }
    }

    /// Product held at `2q` fractional bits, then rounded once to `q`.
    pub fn mul(&self, other: &Self, mode: RoundingMode) -> Result<Self, FxError> {
        let fmt = self.same_fmt(other)?;
        let wide = self.raw() as i128 * other.raw() as i128;
        let raw = fmt.check("mul", mode.shift(wide, fmt.q))?;
        Ok(Self {
            fx: FxValue { raw, fmt },
            shadow: &self.shadow * &other.shadow,
        })
    }

    pub fn min(&self, other: &Self) -> Result<Self, FxError> {
        let fmt = self.same_fmt(other)?;
        Ok(Self {
            fx: FxValue {
                raw: self.raw().min(other.raw()),
                fmt,
            },
            shadow: (&self.shadow).min(&other.shadow).clone(),
        })
    }

    pub fn max(&self, other: &Self) -> Result<Self, FxError> {
        let fmt = self.same_fmt(other)?;
        Ok(Self {
            fx: FxValue {
                raw: self.raw().max(other.raw()),
                fmt,
            },
            shadow: (&self.shadow).max(&other.shadow).clone(),
        })
    }

    /// `min(hi, max(lo, x))` applied to the value and to the shadow alike.
    pub fn clamp(&self, lo: FxValue, hi: FxValue) -> Result<Self, FxError> {
        if lo.fmt != self.fmt() || hi.fmt != self.fmt() {
            return Err(FxError::FormatMismatch(self.fmt(), lo.fmt));
        }
        if lo.raw > hi.raw {
            return Err(FxError::InvalidBounds);
        }
        self.max(&Tracked::exact(lo))?.min(&Tracked::exact(hi))
    }
}

/// Vector of tracked values sharing one format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackedVector {
    fmt: FxFormat,
    items: Vec<Tracked>,
}

impl TrackedVector {
    pub fn new(fmt: FxFormat, items: Vec<Tracked>) -> Result<Self, FxError> {
        if let Some(bad) = items.iter().find(|t| t.fmt() != fmt) {
            return Err(FxError::FormatMismatch(fmt, bad.fmt()));
        }
        Ok(Self { fmt, items })
    }

    pub fn from_raw(fmt: FxFormat, raw: &[i64]) -> Result<Self, FxError> {
        let items = raw
            .iter()
            .map(|&r| FxValue::from_raw(r, fmt).map(Tracked::exact))
            .collect::<Result<_, _>>()?;
        Ok(Self { fmt, items })
    }

    pub fn zeros(fmt: FxFormat, n: usize) -> Self {
        Self {
            fmt,
            items: vec![Tracked::zero(fmt); n],
        }
    }

    pub fn fmt(&self) -> FxFormat {
        self.fmt
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Tracked] {
        &self.items
    }

    pub fn raws(&self) -> Vec<i64> {
        self.items.iter().map(Tracked::raw).collect()
    }

    pub fn values(&self) -> Vec<Rat> {
        self.items.iter().map(Tracked::value).collect()
    }

    pub fn shadows(&self) -> Vec<Rat> {
        self.items.iter().map(|t| t.shadow.clone()).collect()
    }

    pub fn errs(&self) -> Vec<Rat> {
        self.items.iter().map(Tracked::err).collect()
    }

    fn conform(&self, other: &Self) -> Result<(), FxError> {
        if self.fmt != other.fmt {
            return Err(FxError::FormatMismatch(self.fmt, other.fmt));
        }
        if self.len() != other.len() {
            return Err(FxError::LengthMismatch(self.len(), other.len()));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FxError> {
        self.conform(other)?;
        let items = self
            .items
            .iter()
            .zip(&other.items)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            fmt: self.fmt,
            items,
        })
    }

    /// Inner product: each scalar product is rounded once to `q` bits,
    /// partial sums are exact (overflow-checked) integer additions.
    pub fn dot(&self, other: &Self, mode: RoundingMode) -> Result<Tracked, FxError> {
        self.conform(other)?;
        let mut acc = Tracked::zero(self.fmt);
        for (a, b) in self.items.iter().zip(&other.items) {
            acc = acc.add(&a.mul(b, mode)?)?;
        }
        Ok(acc)
    }
}

/// Dense row-major matrix of grid values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FxMatrix {
    rows: usize,
    cols: usize,
    data: Vec<FxValue>,
}

impl FxMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<FxValue>) -> Result<Self, FxError> {
        if data.len() != rows * cols {
            return Err(FxError::LengthMismatch(data.len(), rows * cols));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_raw(rows: usize, cols: usize, fmt: FxFormat, raw: &[i64]) -> Result<Self, FxError> {
        let data = raw
            .iter()
            .map(|&r| FxValue::from_raw(r, fmt))
            .collect::<Result<_, _>>()?;
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> FxValue {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[FxValue] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Row-wise [`TrackedVector::dot`] with `x`.
    pub fn matvec(&self, x: &TrackedVector, mode: RoundingMode) -> Result<TrackedVector, FxError> {
        if x.len() != self.cols {
            return Err(FxError::LengthMismatch(self.cols, x.len()));
        }
        let items = (0..self.rows)
            .map(|i| {
                let row = TrackedVector::new(
                    x.fmt,
                    self.row(i).iter().copied().map(Tracked::exact).collect(),
                )?;
                row.dot(x, mode)
            })
            .collect::<Result<_, _>>()?;
        TrackedVector::new(x.fmt, items)
    }
}

pub fn is_on_grid(x: &Rat, fmt: FxFormat) -> bool {
    (x * Rat::from_integer(pow2(fmt.q))).is_integer()
        && (x.abs() * Rat::from_integer(pow2(fmt.q))) < Rat::from_integer(BigInt::from(fmt.raw_limit()))
}
