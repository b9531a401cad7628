//! Feed-file data model: the "trades" and "quotes" CSV formats.
//!
//! Timestamps are integer milliseconds since midnight and prices are integer
//! multiples of 0.001, so that matching can use exact equality. Both are
//! written with exactly three fractional digits; the readers accept zero to
//! three.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since midnight, exchange local time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_millis(millis: i64) -> Self {
        Timestamp(millis)
    }

    pub const fn millis(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// Signed offset in milliseconds.
    pub const fn offset(self, millis: i64) -> Self {
        Timestamp(self.0 + millis)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

impl FromStr for Timestamp {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed3(s).map(Timestamp).ok_or(())
    }
}

/// Price in units of 0.001 currency. Always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Price(pub i64);

impl Price {
    pub const fn from_milli(milli_units: i64) -> Self {
        Price(milli_units)
    }

    pub const fn milli(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

impl FromStr for Price {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match parse_fixed3(s) {
            Some(v) if v > 0 => Ok(Price(v)),
            _ => Err(()),
        }
    }
}

/// Book side of a quote line: `A` (ask) or `B` (bid).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Ask,
    Bid,
}

impl Side {
    pub fn token(self) -> &'static str {
        match self {
            Side::Ask => "A",
            Side::Bid => "B",
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Ask => Side::Bid,
            Side::Bid => Side::Ask,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Side {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(Side::Ask),
            "B" => Ok(Side::Bid),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TradeRecord {
    pub t: Timestamp,
    pub price: Price,
    pub qty: u64,
}

impl TradeRecord {
    pub fn new(t: Timestamp, price: Price, qty: u64) -> Self {
        TradeRecord { t, price, qty }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuoteRecord {
    pub t: Timestamp,
    pub side: Side,
    /// 1-based level index, 1 is the best quote.
    pub level: u16,
    pub price: Price,
    pub qty: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    FieldCount { expected: usize, found: usize },
    Timestamp,
    Price,
    Quantity,
    NegativeQuantity,
    ZeroQuantity,
    Side,
    Level { depth: u16 },
    Encoding,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::FieldCount { expected, found } => {
                write!(f, "expected {expected} fields, found {found}")
            }
            ParseErrorKind::Timestamp => f.write_str("malformed timestamp"),
            ParseErrorKind::Price => f.write_str("malformed price (positive, at most 3 decimals)"),
            ParseErrorKind::Quantity => f.write_str("malformed quantity"),
            ParseErrorKind::NegativeQuantity => f.write_str("negative quantity"),
            ParseErrorKind::ZeroQuantity => f.write_str("trade quantity must be positive"),
            ParseErrorKind::Side => f.write_str("unknown side token (expected A or B)"),
            ParseErrorKind::Level { depth } => write!(f, "level outside [1, {depth}]"),
            ParseErrorKind::Encoding => f.write_str("invalid UTF-8"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {kind}: {raw:?}")]
    Line {
        line: usize,
        raw: String,
        kind: ParseErrorKind,
    },
    #[error("read error: {0}")]
    Io(#[from] io::Error),
}

impl ParseError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Line { line, .. } => Some(*line),
            ParseError::Io(_) => None,
        }
    }
}

/// Parses a non-negative decimal with at most three fractional digits into
/// thousandths. Signs, exponents and excess precision are rejected.
pub(crate) fn parse_fixed3(s: &str) -> Option<i64> {
    let (int_part, frac_part) = match s.split_once('.') {
        Some((i, f)) => (i, f),
        None => (s, ""),
    };
    if int_part.is_empty() || frac_part.len() > 3 {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if s.ends_with('.') {
        return None;
    }
    let whole: i64 = int_part.parse().ok()?;
    let mut frac: i64 = 0;
    for (i, b) in frac_part.bytes().enumerate() {
        frac += i64::from(b - b'0') * [100, 10, 1][i];
    }
    whole.checked_mul(1000)?.checked_add(frac)
}

fn parse_qty(field: &str) -> Result<u64, ParseErrorKind> {
    if let Some(rest) = field.strip_prefix('-') {
        if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseErrorKind::NegativeQuantity);
        }
        return Err(ParseErrorKind::Quantity);
    }
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseErrorKind::Quantity);
    }
    field.parse().map_err(|_| ParseErrorKind::Quantity)
}

/// Iterates non-empty lines with their 1-based line numbers, stripping CR.
fn for_each_line<R, F>(mut reader: R, mut f: F) -> Result<(), ParseError>
where
    R: BufRead,
    F: FnMut(usize, &str) -> Result<(), ParseError>,
{
    let mut buf = Vec::new();
    let mut lineno = 0usize;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            return Ok(());
        }
        lineno += 1;
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        if buf.is_empty() {
            continue;
        }
        let line = std::str::from_utf8(&buf).map_err(|_| ParseError::Line {
            line: lineno,
            raw: String::from_utf8_lossy(&buf).into_owned(),
            kind: ParseErrorKind::Encoding,
        })?;
        f(lineno, line)?;
    }
}

fn trade_from_line(line: &str) -> Result<TradeRecord, ParseErrorKind> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(ParseErrorKind::FieldCount { expected: 3, found: fields.len() });
    }
    let t = fields[0].parse().map_err(|_| ParseErrorKind::Timestamp)?;
    let price = fields[1].parse().map_err(|_| ParseErrorKind::Price)?;
    let qty = parse_qty(fields[2])?;
    if qty == 0 {
        return Err(ParseErrorKind::ZeroQuantity);
    }
    Ok(TradeRecord { t, price, qty })
}

fn quote_from_line(line: &str, depth: u16) -> Result<QuoteRecord, ParseErrorKind> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(ParseErrorKind::FieldCount { expected: 5, found: fields.len() });
    }
    let t = fields[0].parse().map_err(|_| ParseErrorKind::Timestamp)?;
    let side = fields[1].parse().map_err(|_| ParseErrorKind::Side)?;
    let level: u16 = fields[2].parse().map_err(|_| ParseErrorKind::Level { depth })?;
    if level == 0 || level > depth {
        return Err(ParseErrorKind::Level { depth });
    }
    let price = fields[3].parse().map_err(|_| ParseErrorKind::Price)?;
    let qty = parse_qty(fields[4])?;
    Ok(QuoteRecord { t, side, level, price, qty })
}

/// Reads a "trades" file: `timestamp,price,quantity` per line, no header.
pub fn parse_trades<R: BufRead>(reader: R) -> Result<Vec<TradeRecord>, ParseError> {
    let mut out = Vec::new();
    for_each_line(reader, |line_no, line| {
        let rec = trade_from_line(line).map_err(|kind| ParseError::Line {
            line: line_no,
            raw: line.to_string(),
            kind,
        })?;
        out.push(rec);
        Ok(())
    })?;
    Ok(out)
}

/// Reads a "quotes" file: `timestamp,side,level,price,quantity` per line.
/// `depth` is the number of visible levels per side.
pub fn parse_quotes<R: BufRead>(reader: R, depth: u16) -> Result<Vec<QuoteRecord>, ParseError> {
    let mut out = Vec::new();
    for_each_line(reader, |line_no, line| {
        let rec = quote_from_line(line, depth).map_err(|kind| ParseError::Line {
            line: line_no,
            raw: line.to_string(),
            kind,
        })?;
        out.push(rec);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_trades<W: Write>(mut w: W, trades: &[TradeRecord]) -> io::Result<()> {
    for tr in trades {
        writeln!(w, "{},{},{}", tr.t, tr.price, tr.qty)?;
    }
    Ok(())
}

pub fn write_quotes<W: Write>(mut w: W, quotes: &[QuoteRecord]) -> io::Result<()> {
    for q in quotes {
        writeln!(w, "{},{},{},{},{}", q.t, q.side, q.level, q.price, q.qty)?;
    }
    Ok(())
}

pub fn trades_to_bytes(trades: &[TradeRecord]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(trades.len() * 24);
    write_trades(&mut buf, trades).expect("writing to Vec cannot fail");
    buf
}

pub fn quotes_to_bytes(quotes: &[QuoteRecord]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(quotes.len() * 28);
    write_quotes(&mut buf, quotes).expect("writing to Vec cannot fail");
    buf
}

/// Converts a duration in seconds to whole milliseconds, rounding to nearest.
pub fn secs_to_millis(secs: f64) -> i64 {
    (secs * 1000.0).round() as i64
}
