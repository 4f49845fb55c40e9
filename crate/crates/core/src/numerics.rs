//! Arbitrary-precision complex scalars and the decimal-digit precision policy.
//!
//! Precision is always quoted in decimal digits at the interface. A value
//! carrying `p` digits is backed by MPFR floats of `ceil(p * log2(10))` bits.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rug::float::Round;
use rug::ops::{CompleteRound, Pow};
use rug::{Assign, Float, Rational};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const LOG2_10: f64 = std::f64::consts::LOG2_10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumericsError {
    #[error("precision exhausted at {max_digits} digits")]
    PrecisionExhausted { max_digits: u32 },
    #[error("invalid precision policy: {0}")]
    InvalidPolicy(String),
    #[error("cannot parse decimal `{0}`")]
    Parse(String),
}

/// Binary precision backing `digits` decimal digits.
pub fn digits_to_bits(digits: u32) -> u32 {
    (f64::from(digits) * LOG2_10).ceil() as u32
}

/// Decimal digits represented by a binary precision, rounded down.
pub fn bits_to_digits(bits: u32) -> u32 {
    (f64::from(bits) / LOG2_10).floor() as u32
}

/// Significant digits that guarantee an exact decimal round trip of a
/// `bits`-bit float.
pub fn round_trip_digits(bits: u32) -> usize {
    1 + (f64::from(bits) * std::f64::consts::LOG10_2).ceil() as usize
}

/// Working-precision rules shared by every stage of a computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionPolicy {
    pub base_digits: u32,
    /// Extra decimal digits per unit of Hankel dimension.
    pub digits_per_dimension: u32,
    /// Growth factor applied on escalation, as a rational `num/den > 1`.
    pub escalation_num: u32,
    pub escalation_den: u32,
    pub max_digits: u32,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy {
            base_digits: 40,
            digits_per_dimension: 8,
            escalation_num: 2,
            escalation_den: 1,
            max_digits: 2000,
        }
    }
}

impl PrecisionPolicy {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.base_digits < 16 {
            return Err(NumericsError::InvalidPolicy(format!(
                "base_digits = {} is below 16",
                self.base_digits
            )));
        }
        if self.max_digits < self.base_digits {
            return Err(NumericsError::InvalidPolicy(format!(
                "max_digits = {} is below base_digits = {}",
                self.max_digits, self.base_digits
            )));
        }
        if self.escalation_den == 0 || self.escalation_num <= self.escalation_den {
            return Err(NumericsError::InvalidPolicy(format!(
                "escalation factor {}/{} must exceed 1",
                self.escalation_num, self.escalation_den
            )));
        }
        Ok(())
    }

    /// Digits to use for a Hankel determinant of dimension `dimension`.
    pub fn working_digits(&self, dimension: usize) -> u32 {
        let scaled = u64::from(self.digits_per_dimension) * dimension.max(1) as u64;
        let wanted = u64::from(self.base_digits).max(scaled);
        wanted.min(u64::from(self.max_digits)) as u32
    }

    /// Next precision level above `current`, capped at `max_digits`.
    pub fn escalate(&self, current: u32) -> Result<u32, NumericsError> {
        if current >= self.max_digits {
            return Err(NumericsError::PrecisionExhausted {
                max_digits: self.max_digits,
            });
        }
        let num = u64::from(current) * u64::from(self.escalation_num);
        let den = u64::from(self.escalation_den);
        let next = num.div_ceil(den);
        Ok(next.min(u64::from(self.max_digits)) as u32)
    }
}

/// Arbitrary-precision complex number.
#[derive(Clone, PartialEq)]
pub struct BigComplex {
    pub re: Float,
    pub im: Float,
    digits: u32,
}

impl BigComplex {
    pub fn zero(digits: u32) -> Self {
        let bits = digits_to_bits(digits);
        BigComplex {
            re: Float::new(bits),
            im: Float::new(bits),
            digits,
        }
    }

    pub fn from_f64(re: f64, im: f64, digits: u32) -> Self {
        let bits = digits_to_bits(digits);
        BigComplex {
            re: Float::with_val(bits, re),
            im: Float::with_val(bits, im),
            digits,
        }
    }

    pub fn from_rational(re: &Rational, im: &Rational, digits: u32) -> Self {
        let bits = digits_to_bits(digits);
        BigComplex {
            re: Float::with_val(bits, re),
            im: Float::with_val(bits, im),
            digits,
        }
    }

    pub fn from_parts(re: Float, im: Float, digits: u32) -> Self {
        let bits = digits_to_bits(digits);
        let mut z = BigComplex {
            re,
            im,
            digits,
        };
        z.re.set_prec(bits);
        z.im.set_prec(bits);
        z
    }

    pub fn digits(&self) -> u32 {
        self.digits
    }

    pub fn bits(&self) -> u32 {
        digits_to_bits(self.digits)
    }

    /// Copy of `self` rounded (or zero-extended) to `digits`.
    pub fn with_digits(&self, digits: u32) -> Self {
        let bits = digits_to_bits(digits);
        BigComplex {
            re: Float::with_val(bits, &self.re),
            im: Float::with_val(bits, &self.im),
            digits,
        }
    }

    pub fn conj(&self) -> Self {
        BigComplex {
            re: self.re.clone(),
            im: Float::with_val(self.bits(), -&self.im),
            digits: self.digits,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    /// Modulus at working precision.
    pub fn abs(&self) -> Float {
        Float::with_val(self.bits(), self.re.hypot_ref(&self.im))
    }

    /// Modulus as an `f64`; saturates to 0 or infinity outside the f64 range.
    pub fn abs_f64(&self) -> f64 {
        self.abs().to_f64()
    }

    /// `log10 |z|`, finite even where `|z|` underflows an f64. `-inf` for zero.
    pub fn log10_abs(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.abs().log10().to_f64()
    }

    /// `|re| + |im|`, a cheap magnitude for pivot comparisons.
    pub fn norm1(&self) -> Float {
        let bits = self.bits();
        let mut s = Float::with_val(bits, self.re.abs_ref());
        s += Float::with_val(bits, self.im.abs_ref());
        s
    }

    pub fn to_c64(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    pub fn mul_ref(&self, other: &BigComplex) -> BigComplex {
        let bits = self.bits().max(other.bits());
        let re = Float::with_val(bits, &self.re * &other.re - &self.im * &other.im);
        let im = Float::with_val(bits, &self.re * &other.im + &self.im * &other.re);
        BigComplex {
            re,
            im,
            digits: self.digits.max(other.digits),
        }
    }

    pub fn add_ref(&self, other: &BigComplex) -> BigComplex {
        let bits = self.bits().max(other.bits());
        BigComplex {
            re: Float::with_val(bits, &self.re + &other.re),
            im: Float::with_val(bits, &self.im + &other.im),
            digits: self.digits.max(other.digits),
        }
    }

    pub fn sub_ref(&self, other: &BigComplex) -> BigComplex {
        let bits = self.bits().max(other.bits());
        BigComplex {
            re: Float::with_val(bits, &self.re - &other.re),
            im: Float::with_val(bits, &self.im - &other.im),
            digits: self.digits.max(other.digits),
        }
    }

    pub fn recip(&self) -> BigComplex {
        let bits = self.bits();
        let mut den = Float::with_val(bits, self.re.square_ref());
        den += Float::with_val(bits, self.im.square_ref());
        let re = Float::with_val(bits, &self.re / &den);
        let mut im = Float::with_val(bits, &self.im / &den);
        im = -im;
        BigComplex {
            re,
            im,
            digits: self.digits,
        }
    }

    pub fn div_ref(&self, other: &BigComplex) -> BigComplex {
        self.mul_ref(&other.recip())
    }

    pub fn scale_rational(&self, q: &Rational) -> BigComplex {
        let bits = self.bits();
        let qf = Float::with_val(bits, q);
        BigComplex {
            re: Float::with_val(bits, &self.re * &qf),
            im: Float::with_val(bits, &self.im * &qf),
            digits: self.digits,
        }
    }

    /// `self += a * b` using `tmp` as scratch.
    pub fn add_mul_assign(&mut self, a: &BigComplex, b: &BigComplex, tmp: &mut Float) {
        tmp.assign(&a.re * &b.re - &a.im * &b.im);
        self.re += &*tmp;
        tmp.assign(&a.re * &b.im + &a.im * &b.re);
        self.im += &*tmp;
    }

    /// `self -= a * b` using `tmp` as scratch.
    pub fn sub_mul_assign(&mut self, a: &BigComplex, b: &BigComplex, tmp: &mut Float) {
        tmp.assign(&a.re * &b.re - &a.im * &b.im);
        self.re -= &*tmp;
        tmp.assign(&a.re * &b.im + &a.im * &b.re);
        self.im -= &*tmp;
    }

    /// Decimal form of one component with exactly `sig` significant digits.
    pub fn format_real(x: &Float, sig: usize) -> String {
        format_float(x, sig)
    }

    /// Shortest digit count that round-trips this value exactly.
    pub fn round_trip_digits(&self) -> usize {
        round_trip_digits(self.bits())
    }

    /// `(re, im)` as decimal strings with `sig` significant digits each.
    pub fn to_decimal(&self, sig: usize) -> (String, String) {
        (format_float(&self.re, sig), format_float(&self.im, sig))
    }

    /// `(re, im)` as decimal strings that parse back to the identical value.
    pub fn to_decimal_exact(&self) -> (String, String) {
        self.to_decimal(self.round_trip_digits())
    }

    pub fn parse(re: &str, im: &str, digits: u32) -> Result<BigComplex, NumericsError> {
        Ok(BigComplex {
            re: parse_float(re, digits)?,
            im: parse_float(im, digits)?,
            digits,
        })
    }
}

impl fmt::Debug for BigComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (re, im) = self.to_decimal(20);
        write!(f, "({re}, {im}; {}d)", self.digits)
    }
}

impl fmt::Display for BigComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sig = f.precision().unwrap_or(20);
        let (re, im) = self.to_decimal(sig);
        if im.starts_with('-') {
            write!(f, "{re} - {}i", &im[1..])
        } else {
            write!(f, "{re} + {im}i")
        }
    }
}

impl Neg for BigComplex {
    type Output = BigComplex;
    fn neg(self) -> BigComplex {
        BigComplex {
            re: -self.re,
            im: -self.im,
            digits: self.digits,
        }
    }
}

impl Add for &BigComplex {
    type Output = BigComplex;
    fn add(self, rhs: &BigComplex) -> BigComplex {
        self.add_ref(rhs)
    }
}

impl Sub for &BigComplex {
    type Output = BigComplex;
    fn sub(self, rhs: &BigComplex) -> BigComplex {
        self.sub_ref(rhs)
    }
}

impl Mul for &BigComplex {
    type Output = BigComplex;
    fn mul(self, rhs: &BigComplex) -> BigComplex {
        self.mul_ref(rhs)
    }
}

/// `d.ddd…e±x` with exactly `sig` significant digits; zero prints as `0.0…e+0`.
fn format_float(x: &Float, sig: usize) -> String {
    let sig = sig.max(1);
    if x.is_zero() {
        let sign = if x.is_sign_negative() { "-" } else { "" };
        return format!("{sign}0.{}e+0", "0".repeat(sig.saturating_sub(1).max(1)));
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x.is_sign_negative() {
            "-inf".to_string()
        } else {
            "inf".to_string()
        };
    }
    let (neg, digits, exp) = x.to_sign_string_exp_round(10, Some(sig), Round::Nearest);
    let exp = exp.unwrap_or(0) - 1;
    let (head, tail) = digits.split_at(1);
    let tail = if tail.is_empty() { "0" } else { tail };
    let sign = if neg { "-" } else { "" };
    let esign = if exp < 0 { '-' } else { '+' };
    format!("{sign}{head}.{tail}e{esign}{}", exp.abs())
}

/// Parse a plain or scientific decimal at `digits` precision.
pub fn parse_float(s: &str, digits: u32) -> Result<Float, NumericsError> {
    let parsed = Float::parse(s.trim()).map_err(|_| NumericsError::Parse(s.to_string()))?;
    Ok(parsed.complete(digits_to_bits(digits)))
}

/// Exact rational value of a decimal literal such as `-7.5` or `1.25e-3`.
pub fn parse_decimal_rational(s: &str) -> Result<Rational, NumericsError> {
    let err = || NumericsError::Parse(s.to_string());
    let t = s.trim();
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(pos) => (&t[..pos], t[pos + 1..].parse::<i32>().map_err(|_| err())?),
        None => (t, 0),
    };
    let (neg, body) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((a, b)) => (a, b),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer = rug::Integer::from_str_radix(&all_digits, 10).map_err(|_| err())?;
    let scale = exponent - frac_part.len() as i32;
    let ten = rug::Integer::from(10);
    let mut q = if scale >= 0 {
        Rational::from(numer * ten.pow(scale as u32))
    } else {
        Rational::from((numer, ten.pow((-scale) as u32)))
    };
    if neg {
        q = -q;
    }
    Ok(q)
}
