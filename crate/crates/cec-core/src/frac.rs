//! Exact rational arithmetic helpers.
//!
//! Speeds, load fractions, block sizes and completion times are all
//! arbitrary-precision rationals; the optimizer and the assignment loop
//! depend on knife-edge comparisons staying exact.

use num::bigint::BigInt;
use num::rational::BigRational;
use std::fmt;

pub type Frac = BigRational;

/// Builds `num/den` from machine integers. Panics on a zero denominator, so
/// it is meant for literals; parse external input with [`parse_frac`].
pub fn frac(num: i64, den: i64) -> Frac {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn frac_int(value: i64) -> Frac {
    BigRational::from_integer(BigInt::from(value))
}

pub fn frac_usize(value: usize) -> Frac {
    BigRational::from_integer(BigInt::from(value))
}

/// Renders the canonical `num/den` form with an explicit denominator:
/// `0/1`, `1/1`, `2/5`. Output never uses decimal notation.
pub fn format_frac(value: &Frac) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FracParseError {
    pub input: String,
    pub reason: &'static str,
}

impl fmt::Display for FracParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid fraction {:?}: {}", self.input, self.reason)
    }
}

impl std::error::Error for FracParseError {}

/// Parses `"a"` or `"a/b"` (optionally signed, `b != 0`) into a reduced
/// rational.
pub fn parse_frac(text: &str) -> Result<Frac, FracParseError> {
    let err = |reason| FracParseError {
        input: text.to_owned(),
        reason,
    };
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(err("empty"));
    }
    let (num_text, den_text) = match trimmed.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (trimmed, "1"),
    };
    let num: BigInt = num_text.parse().map_err(|_| err("bad numerator"))?;
    let den: BigInt = den_text.parse().map_err(|_| err("bad denominator"))?;
    if den == BigInt::from(0) {
        return Err(err("zero denominator"));
    }
    Ok(BigRational::new(num, den))
}
