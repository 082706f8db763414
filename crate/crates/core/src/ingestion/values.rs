//! Unified value types, canonical rendering and per-column type inference.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

/// The type tag every raw column type is mapped onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UnifiedType {
    Int,
    Float,
    Text,
    Bool,
    Date,
    #[serde(rename = "DATETIME")]
    DateTime,
}

impl UnifiedType {
    pub const ALL: [UnifiedType; 6] = [
        UnifiedType::Int,
        UnifiedType::Float,
        UnifiedType::Text,
        UnifiedType::Bool,
        UnifiedType::Date,
        UnifiedType::DateTime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UnifiedType::Int => "INT",
            UnifiedType::Float => "FLOAT",
            UnifiedType::Text => "TEXT",
            UnifiedType::Bool => "BOOL",
            UnifiedType::Date => "DATE",
            UnifiedType::DateTime => "DATETIME",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, UnifiedType::Int | UnifiedType::Float)
    }

    pub fn is_temporal(self) -> bool {
        matches!(self, UnifiedType::Date | UnifiedType::DateTime)
    }

    /// Maps a declared SQL column type onto a tag following SQLite's affinity
    /// rules. `None` means the declaration carries no usable affinity
    /// (NUMERIC, DECIMAL, blank) and the type must be inferred from values.
    pub fn from_sql_decl(decl: &str) -> Option<UnifiedType> {
        let d = decl.to_ascii_uppercase();
        if d.contains("DATETIME") || d.contains("TIMESTAMP") {
            Some(UnifiedType::DateTime)
        } else if d.contains("DATE") {
            Some(UnifiedType::Date)
        } else if d.contains("BOOL") {
            Some(UnifiedType::Bool)
        } else if d.contains("INT") {
            Some(UnifiedType::Int)
        } else if d.contains("CHAR") || d.contains("CLOB") || d.contains("TEXT") {
            Some(UnifiedType::Text)
        } else if d.contains("REAL") || d.contains("FLOA") || d.contains("DOUB") {
            Some(UnifiedType::Float)
        } else {
            None
        }
    }

    /// Declared type used for staging columns.
    pub fn sql_decl(self) -> &'static str {
        match self {
            UnifiedType::Int => "INTEGER",
            UnifiedType::Float => "REAL",
            UnifiedType::Text => "TEXT",
            UnifiedType::Bool => "BOOLEAN",
            UnifiedType::Date => "DATE",
            UnifiedType::DateTime => "DATETIME",
        }
    }
}

impl fmt::Display for UnifiedType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnifiedType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UnifiedType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown type tag '{s}'"))
    }
}

/// A parsed numeric cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    pub fn as_f64(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }
}

pub fn parse_number(raw: &str) -> Option<Number> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    let unsigned = s.strip_prefix('+').unwrap_or(s);
    if let Ok(i) = unsigned.parse::<i64>() {
        return Some(Number::Int(i));
    }
    // Rust accepts "inf" and "NaN"; those are not data values here.
    let looks_numeric = unsigned
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    if !looks_numeric {
        return None;
    }
    match unsigned.parse::<f64>() {
        Ok(f) if f.is_finite() => Some(Number::Float(f)),
        _ => None,
    }
}

/// Shortest round-trip decimal rendering; integral values print without a
/// fractional part so that "1", "1.0" and "1.00" agree.
pub fn render_number(n: Number) -> String {
    match n {
        Number::Int(i) => i.to_string(),
        Number::Float(f) => {
            if f.fract() == 0.0 && f.abs() < 9.007_199_254_740_992e15 {
                (f as i64).to_string()
            } else {
                format!("{f}")
            }
        }
    }
}

pub fn parse_bool(raw: &str) -> Option<bool> {
    let s = raw.trim();
    if s.eq_ignore_ascii_case("true") {
        Some(true)
    } else if s.eq_ignore_ascii_case("false") {
        Some(false)
    } else {
        None
    }
}

pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let s = raw.trim();
    if s.len() != 10 {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

const DATETIME_FORMATS: [&str; 4] =
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];

pub fn parse_datetime(raw: &str) -> Option<NaiveDateTime> {
    let s = raw.trim();
    if s.len() < 16 {
        return None;
    }
    for fmt in DATETIME_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|dt| dt.naive_utc())
}

pub fn render_date(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

pub fn render_datetime(dt: NaiveDateTime) -> String {
    dt.format("%Y-%m-%dT%H:%M:%S%.f").to_string()
}

/// Canonical text of a raw cell under the column's type tag.
///
/// Cells that do not parse under the tag fall back to text canonicalization,
/// so the function is total and idempotent.
pub fn canonicalize(raw: &str, ty: UnifiedType) -> String {
    let trimmed = raw.trim();
    let typed = match ty {
        UnifiedType::Int | UnifiedType::Float => parse_number(trimmed).map(render_number),
        UnifiedType::Bool => parse_bool(trimmed).map(|b| b.to_string()),
        UnifiedType::Date => parse_date(trimmed).map(render_date),
        UnifiedType::DateTime => parse_datetime(trimmed).map(render_datetime),
        UnifiedType::Text => None,
    };
    typed.unwrap_or_else(|| trimmed.to_lowercase())
}

/// Counts which tags each non-empty cell is consistent with.
#[derive(Debug, Default, Clone)]
pub struct TypeTally {
    pub non_empty: usize,
    pub int: usize,
    pub float: usize,
    pub boolean: usize,
    pub date: usize,
    pub datetime: usize,
}

impl TypeTally {
    pub fn observe(&mut self, raw: &str) {
        let s = raw.trim();
        if s.is_empty() {
            return;
        }
        self.non_empty += 1;
        match parse_number(s) {
            Some(Number::Int(_)) => {
                self.int += 1;
                self.float += 1;
            }
            Some(Number::Float(_)) => self.float += 1,
            None => {}
        }
        if parse_bool(s).is_some() {
            self.boolean += 1;
        }
        if parse_date(s).is_some() {
            self.date += 1;
        } else if parse_datetime(s).is_some() {
            self.datetime += 1;
        }
    }

    /// The narrowest tag consistent with at least `threshold` of the
    /// non-empty cells, with the number of cells that do not conform.
    pub fn resolve(&self, threshold: f64) -> (UnifiedType, usize) {
        if self.non_empty == 0 {
            return (UnifiedType::Text, 0);
        }
        let total = self.non_empty as f64;
        let candidates = [
            (UnifiedType::Int, self.int),
            (UnifiedType::Float, self.float),
            (UnifiedType::Bool, self.boolean),
            (UnifiedType::Date, self.date),
            (UnifiedType::DateTime, self.datetime),
        ];
        for (ty, hits) in candidates {
            if hits as f64 / total >= threshold {
                return (ty, self.non_empty - hits);
            }
        }
        (UnifiedType::Text, 0)
    }
}
