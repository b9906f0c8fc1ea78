//! Usage-policy statements in bracket notation.
//!
//! ```text
//! [CPU, Site1, VO0, (1hour, 10%), (1minute, 40%)]
//! ```
//!
//! The first tuple is the epoch limit, the second the burst limit. Fixed and
//! extensible policies read only the epoch fraction; commitment policies use
//! both tuples.

use std::fmt;

use thiserror::Error;

use crate::ids::{SiteId, VoId};
use crate::scalar::{parse_decimal, Scalar};

/// Resource a statement governs. Only CPU is modelled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResourceKind {
    Cpu,
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourceKind::Cpu => f.write_str("CPU"),
        }
    }
}

/// An `(interval, fraction)` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitTuple<S> {
    pub interval_s: u64,
    pub fraction: S,
}

impl<S: Scalar> LimitTuple<S> {
    pub fn new(interval_s: u64, fraction: S) -> Self {
        Self {
            interval_s,
            fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UsagePolicyStatement<S> {
    pub resource_kind: ResourceKind,
    pub site_id: SiteId,
    pub vo_id: VoId,
    pub epoch: LimitTuple<S>,
    pub burst: LimitTuple<S>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum StatementError {
    #[error("interval must be positive")]
    ZeroInterval,
    #[error("fraction must lie in [0, 1]")]
    FractionOutOfRange,
    #[error("burst interval {burst}s exceeds epoch interval {epoch}s")]
    BurstLongerThanEpoch { epoch: u64, burst: u64 },
}

impl<S: Scalar> UsagePolicyStatement<S> {
    pub fn new(
        site_id: impl Into<SiteId>,
        vo_id: impl Into<VoId>,
        epoch: LimitTuple<S>,
        burst: LimitTuple<S>,
    ) -> Result<Self, StatementError> {
        let stmt = Self {
            resource_kind: ResourceKind::Cpu,
            site_id: site_id.into(),
            vo_id: vo_id.into(),
            epoch,
            burst,
        };
        stmt.validate()?;
        Ok(stmt)
    }

    pub fn validate(&self) -> Result<(), StatementError> {
        for tuple in [&self.epoch, &self.burst] {
            if tuple.interval_s == 0 {
                return Err(StatementError::ZeroInterval);
            }
            if tuple.fraction < S::zero() || tuple.fraction > S::one() {
                return Err(StatementError::FractionOutOfRange);
            }
        }
        if self.burst.interval_s > self.epoch.interval_s {
            return Err(StatementError::BurstLongerThanEpoch {
                epoch: self.epoch.interval_s,
                burst: self.burst.interval_s,
            });
        }
        Ok(())
    }

    /// The single limit Rᵢ used by fixed and extensible policies.
    pub fn share(&self) -> S {
        self.epoch.fraction
    }
}

/// Duration units, largest first.
const UNITS: [(&str, u64); 6] = [
    ("month", 30 * 86_400),
    ("week", 7 * 86_400),
    ("day", 86_400),
    ("hour", 3_600),
    ("minute", 60),
    ("second", 1),
];

fn unit_seconds(name: &str) -> Option<u64> {
    let lower = name.to_ascii_lowercase();
    let singular = lower.strip_suffix('s').unwrap_or(&lower);
    UNITS
        .iter()
        .find(|(unit, _)| *unit == singular || *unit == lower)
        .map(|&(_, secs)| secs)
}

/// Renders a duration in the largest unit that divides it exactly.
pub fn format_duration(seconds: u64) -> String {
    let (unit, secs) = UNITS
        .iter()
        .copied()
        .find(|&(_, secs)| seconds % secs == 0)
        .unwrap_or(("second", 1));
    let count = seconds / secs;
    if count == 1 {
        format!("{count}{unit}")
    } else {
        format!("{count}{unit}s")
    }
}

/// Renders a statement in canonical bracket notation.
pub fn format_statement<S: Scalar>(stmt: &UsagePolicyStatement<S>) -> String {
    format!(
        "[{}, {}, {}, ({}, {}%), ({}, {}%)]",
        stmt.resource_kind,
        stmt.site_id,
        stmt.vo_id,
        format_duration(stmt.epoch.interval_s),
        stmt.epoch.fraction.format_percent(),
        format_duration(stmt.burst.interval_s),
        stmt.burst.fraction.format_percent(),
    )
}

impl<S: Scalar> fmt::Display for UsagePolicyStatement<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_statement(self))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("expected {expected}, found {found}")]
    Expected {
        expected: &'static str,
        found: String,
    },
    #[error("unknown resource kind `{0}`")]
    UnknownResourceKind(String),
    #[error("unknown duration unit `{0}`")]
    UnknownDurationUnit(String),
    #[error("interval `{0}` is not a positive integer")]
    InvalidInterval(String),
    #[error("fraction `{0}%` outside [0, 100]%")]
    FractionOutOfRange(String),
    #[error("unexpected character `{0}`")]
    UnexpectedChar(char),
    #[error("{0}")]
    Invalid(StatementError),
}

/// Parse failure with the 1-based character column it occurred at.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("column {column}: {kind}")]
pub struct ParseError {
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Percent,
    Number(String),
    Ident(String),
    End,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::LBracket => "`[`".into(),
            Token::RBracket => "`]`".into(),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::Comma => "`,`".into(),
            Token::Percent => "`%`".into(),
            Token::Number(n) => format!("number `{n}`"),
            Token::Ident(i) => format!("`{i}`"),
            Token::End => "end of input".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        let single = match c {
            '[' => Some(Token::LBracket),
            ']' => Some(Token::RBracket),
            '(' => Some(Token::LParen),
            ')' => Some(Token::RParen),
            ',' => Some(Token::Comma),
            '%' => Some(Token::Percent),
            _ => None,
        };
        if let Some(tok) = single {
            tokens.push((column, tok));
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            tokens.push((column, Token::Number(chars[start..i].iter().collect())));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '-' | '.'))
            {
                i += 1;
            }
            tokens.push((column, Token::Ident(chars[start..i].iter().collect())));
        } else {
            return Err(ParseError {
                column,
                kind: ParseErrorKind::UnexpectedChar(c),
            });
        }
    }
    tokens.push((chars.len() + 1, Token::End));
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn next(&mut self) -> (usize, Token) {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn expect(&mut self, want: Token, expected: &'static str) -> Result<usize, ParseError> {
        let (column, tok) = self.next();
        if tok == want {
            Ok(column)
        } else {
            Err(ParseError {
                column,
                kind: ParseErrorKind::Expected {
                    expected,
                    found: tok.describe(),
                },
            })
        }
    }

    fn ident(&mut self, expected: &'static str) -> Result<(usize, String), ParseError> {
        match self.next() {
            (column, Token::Ident(name)) => Ok((column, name)),
            (column, tok) => Err(ParseError {
                column,
                kind: ParseErrorKind::Expected {
                    expected,
                    found: tok.describe(),
                },
            }),
        }
    }

    fn number(&mut self, expected: &'static str) -> Result<(usize, String), ParseError> {
        match self.next() {
            (column, Token::Number(n)) => Ok((column, n)),
            (column, tok) => Err(ParseError {
                column,
                kind: ParseErrorKind::Expected {
                    expected,
                    found: tok.describe(),
                },
            }),
        }
    }

    fn tuple<S: Scalar>(&mut self) -> Result<LimitTuple<S>, ParseError> {
        self.expect(Token::LParen, "`(`")?;
        let (count_col, count) = self.number("interval count")?;
        if count.contains('.') {
            return Err(ParseError {
                column: count_col,
                kind: ParseErrorKind::InvalidInterval(count),
            });
        }
        let (unit_col, unit) = self.ident("duration unit")?;
        let per_unit = unit_seconds(&unit).ok_or(ParseError {
            column: unit_col,
            kind: ParseErrorKind::UnknownDurationUnit(unit),
        })?;
        let interval_s = count
            .parse::<u64>()
            .ok()
            .and_then(|n| n.checked_mul(per_unit))
            .filter(|&s| s > 0)
            .ok_or_else(|| ParseError {
                column: count_col,
                kind: ParseErrorKind::InvalidInterval(count.clone()),
            })?;
        self.expect(Token::Comma, "`,`")?;
        let (pct_col, pct) = self.number("percentage")?;
        let out_of_range = || ParseError {
            column: pct_col,
            kind: ParseErrorKind::FractionOutOfRange(pct.clone()),
        };
        let (num, den) = parse_decimal(&pct).ok_or_else(out_of_range)?;
        if num > 100 * den {
            return Err(out_of_range());
        }
        self.expect(Token::Percent, "`%`")?;
        self.expect(Token::RParen, "`)`")?;
        Ok(LimitTuple::new(interval_s, S::from_ratio(num, den * 100)))
    }
}

/// Parses one bracket-notation statement.
pub fn parse_statement<S: Scalar>(text: &str) -> Result<UsagePolicyStatement<S>, ParseError> {
    let mut p = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    let open = p.expect(Token::LBracket, "`[`")?;
    let (kind_col, kind) = p.ident("resource kind")?;
    if !kind.eq_ignore_ascii_case("cpu") {
        return Err(ParseError {
            column: kind_col,
            kind: ParseErrorKind::UnknownResourceKind(kind),
        });
    }
    p.expect(Token::Comma, "`,`")?;
    let (_, site) = p.ident("site identifier")?;
    p.expect(Token::Comma, "`,`")?;
    let (_, vo) = p.ident("VO identifier")?;
    p.expect(Token::Comma, "`,`")?;
    let epoch = p.tuple()?;
    p.expect(Token::Comma, "`,`")?;
    let burst = p.tuple()?;
    p.expect(Token::RBracket, "`]`")?;
    p.expect(Token::End, "end of input")?;
    UsagePolicyStatement::new(site, vo, epoch, burst).map_err(|e| ParseError {
        column: open,
        kind: ParseErrorKind::Invalid(e),
    })
}

/// Error from a multi-line policy file, carrying the 1-based line number.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}, {source}")]
pub struct PolicyFileError {
    pub line: usize,
    #[source]
    pub source: ParseError,
}

/// Parses a policy file: one statement per line, `#` comments, blank lines ignored.
pub fn parse_policy_file<S: Scalar>(
    text: &str,
) -> Result<Vec<UsagePolicyStatement<S>>, PolicyFileError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(cut) => &raw[..cut],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        let stmt = parse_statement(line).map_err(|source| PolicyFileError {
            line: idx + 1,
            source,
        })?;
        out.push(stmt);
    }
    Ok(out)
}
