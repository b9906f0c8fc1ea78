//! Scalar types used for fractions of site capacity.
//!
//! Usage is accumulated in integer CPU-ticks and converted to a scalar only
//! when a ratio is formed, so every scalar is built through [`Scalar::from_ratio`].
//! Floating-point scalars compare with a small tolerance; the exact rational
//! scalar compares with none.

use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{NumOps, One, Zero};

/// Numeric type able to represent a fraction of site capacity.
pub trait Scalar:
    Copy + PartialOrd + Debug + Send + Sync + Zero + One + NumOps + 'static
{
    /// Builds `num / den`. `den` must be non-zero.
    fn from_ratio(num: i64, den: i64) -> Self;

    /// Absolute tolerance for equality tests.
    fn tolerance() -> Self;

    fn to_f64(self) -> f64;

    /// Renders `self * 100` as a decimal string that parses back to `self`.
    fn format_percent(self) -> String;

    fn abs_diff(self, other: Self) -> Self {
        if self >= other {
            self - other
        } else {
            other - self
        }
    }

    /// `self == other` within tolerance.
    fn approx_eq(self, other: Self) -> bool {
        self.abs_diff(other) <= Self::tolerance()
    }

    /// `self < other` by more than the tolerance.
    fn definitely_lt(self, other: Self) -> bool {
        self + Self::tolerance() < other
    }

    /// `self > other` by more than the tolerance.
    fn definitely_gt(self, other: Self) -> bool {
        self > other + Self::tolerance()
    }

    /// `self <= other` up to tolerance.
    fn le_tol(self, other: Self) -> bool {
        self <= other + Self::tolerance()
    }
}

/// Parses an unsigned decimal literal (`40`, `12.5`, `0.125`) into an exact
/// `(numerator, denominator)` pair with a power-of-ten denominator.
pub fn parse_decimal(text: &str) -> Option<(i64, i64)> {
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    // i64 holds 18 decimal digits comfortably.
    let frac_part = frac_part.trim_end_matches('0');
    if int_part.len() + frac_part.len() > 18 {
        return None;
    }
    let mut num: i64 = 0;
    for b in int_part.bytes().chain(frac_part.bytes()) {
        num = num * 10 + i64::from(b - b'0');
    }
    let den = 10_i64.pow(frac_part.len() as u32);
    Some((num, den))
}

fn trim_decimal(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn format_float_percent<F>(value: F, parse_back: impl Fn(&str) -> Option<F>) -> String
where
    F: Copy + PartialEq + Into<f64>,
{
    let pct = value.into() * 100.0;
    for precision in 0..=17 {
        let candidate = trim_decimal(format!("{pct:.precision$}"));
        if parse_back(&candidate) == Some(value) {
            return candidate;
        }
    }
    format!("{pct}")
}

impl Scalar for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn tolerance() -> Self {
        1e-9
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn format_percent(self) -> String {
        format_float_percent(self, |s| {
            parse_decimal(s).map(|(n, d)| f64::from_ratio(n, d * 100))
        })
    }
}

impl Scalar for f32 {
    fn from_ratio(num: i64, den: i64) -> Self {
        (num as f64 / den as f64) as f32
    }

    fn tolerance() -> Self {
        1e-6
    }

    fn to_f64(self) -> f64 {
        f64::from(self)
    }

    fn format_percent(self) -> String {
        format_float_percent(self, |s| {
            parse_decimal(s).map(|(n, d)| f32::from_ratio(n, d * 100))
        })
    }
}

impl Scalar for Rational64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational64::new(num, den)
    }

    fn tolerance() -> Self {
        Rational64::zero()
    }

    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }

    fn format_percent(self) -> String {
        let pct = self * Rational64::from_integer(100);
        let (numer, denom) = (*pct.numer(), *pct.denom());
        // Terminating decimals only have 2 and 5 in the reduced denominator.
        let mut rest = denom;
        let (mut twos, mut fives) = (0u32, 0u32);
        while rest % 2 == 0 {
            rest /= 2;
            twos += 1;
        }
        while rest % 5 == 0 {
            rest /= 5;
            fives += 1;
        }
        if rest != 1 {
            return trim_decimal(format!("{:.17}", pct.to_f64()));
        }
        let digits = twos.max(fives);
        let scaled = (numer as i128) * 10_i128.pow(digits) / denom as i128;
        if digits == 0 {
            return scaled.to_string();
        }
        let scale = 10_i128.pow(digits);
        let whole = scaled / scale;
        let frac = scaled % scale;
        trim_decimal(format!("{whole}.{frac:0width$}", width = digits as usize))
    }
}
