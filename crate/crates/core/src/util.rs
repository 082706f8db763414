//! Small helpers shared across modules.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Serializes `value` as pretty JSON with object keys in sorted order and a
/// trailing newline. Two equal values always produce identical bytes.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    // serde_json's default map is a BTreeMap, so going through `Value` sorts keys.
    let value = serde_json::to_value(value)?;
    let mut out = serde_json::to_string_pretty(&value)?;
    out.push('\n');
    Ok(out)
}

/// Writes canonical JSON to `path`, creating parent directories.
pub fn write_canonical_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> std::io::Result<()> {
    let text = to_canonical_json(value).map_err(std::io::Error::other)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
}

/// A non-fatal observation made while processing some input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// What the diagnostic is about: a file, alias, node id, ...
    pub subject: String,
    pub message: String,
}

impl Diagnostic {
    pub fn info(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self { severity: Severity::Info, subject: subject.into(), message: message.into() }
    }

    pub fn warning(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, subject: subject.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Info => "info",
            Severity::Warning => "warning",
        };
        write!(f, "{level}: {}: {}", self.subject, self.message)
    }
}

/// Formats a float with at most `digits` decimals and no trailing zeros.
pub fn format_decimal(value: f64, digits: usize) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    let s = format!("{value:.digits$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn canonical_json_sorts_keys() {
        let mut m = HashMap::new();
        m.insert("zeta", 1);
        m.insert("alpha", 2);
        m.insert("mid", 3);
        let s = to_canonical_json(&m).unwrap();
        let a = s.find("alpha").unwrap();
        let b = s.find("mid").unwrap();
        let c = s.find("zeta").unwrap();
        assert!(a < b && b < c);
        assert!(s.ends_with('\n'));
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(format_decimal(2.5, 3), "2.5");
        assert_eq!(format_decimal(2.0, 3), "2");
        assert_eq!(format_decimal(-0.0001, 2), "0");
        assert_eq!(format_decimal(1234.5678, 2), "1234.57");
    }
}
