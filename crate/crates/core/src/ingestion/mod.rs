//! Source discovery, reading and column sampling.

pub mod json;
mod sampling;
pub mod text;
mod values;

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};

pub use sampling::{ReservoirSampler, SampleSet};
pub use values::{
    canonicalize, parse_bool, parse_date, parse_datetime, parse_number, render_date, render_datetime,
    render_number, Number, TypeTally, UnifiedType,
};

use crate::metagraph::{Alias, ColumnMeta, ColumnRole, SourceRef};
use crate::provider::{CascadeSession, Provider};
use crate::util::Diagnostic;

pub const SUMMARY_COLUMN: &str = "summary";
pub const KEY_TERMS_COLUMN: &str = "key_terms";
const SQLITE_MAGIC: &[u8] = b"SQLite format 3\0";
const SNIFF_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceFormat {
    #[serde(rename = "CSV")]
    Csv,
    #[serde(rename = "SQL_DB")]
    SqlDb,
    #[serde(rename = "JSON_DOC")]
    JsonDoc,
    #[serde(rename = "TEXT")]
    Text,
}

impl SourceFormat {
    pub const ALL: [SourceFormat; 4] = [SourceFormat::Csv, SourceFormat::SqlDb, SourceFormat::JsonDoc, SourceFormat::Text];

    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "csv" => Some(SourceFormat::Csv),
            "db" | "sqlite" | "sqlite3" => Some(SourceFormat::SqlDb),
            "json" => Some(SourceFormat::JsonDoc),
            "txt" => Some(SourceFormat::Text),
            _ => None,
        }
    }

    /// First segment of a column alias.
    pub fn alias_segment(self) -> &'static str {
        match self {
            SourceFormat::Csv => "csv",
            SourceFormat::SqlDb => "sqlite",
            SourceFormat::JsonDoc => "json",
            SourceFormat::Text => "txt",
        }
    }

    pub fn from_alias_segment(seg: &str) -> Option<Self> {
        SourceFormat::ALL.into_iter().find(|f| f.alias_segment() == seg)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceFormat::Csv => "CSV",
            SourceFormat::SqlDb => "SQL_DB",
            SourceFormat::JsonDoc => "JSON_DOC",
            SourceFormat::Text => "TEXT",
        }
    }
}

impl std::fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceFormat::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s) || f.alias_segment().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown source format '{s}'"))
    }
}

/// One recognized data file in a workspace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    /// File stem; unique per format within a workspace.
    pub source_id: String,
    pub format: SourceFormat,
    pub path: PathBuf,
    pub tables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestionConfig {
    pub sample_cap: usize,
    pub seed: u64,
    pub type_inference_threshold: f64,
}

impl Default for IngestionConfig {
    fn default() -> Self {
        Self { sample_cap: 1000, seed: 42, type_inference_threshold: 0.99 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestionError {
    #[error("cannot read workspace directory {path}: {source}")]
    UnreadableDirectory { path: PathBuf, source: std::io::Error },
    #[error("{path}: content does not look like {expected}: {detail}")]
    ContentMismatch { path: PathBuf, expected: SourceFormat, detail: String },
    #[error("source id '{source_id}' ({format}) is used by both {first} and {second}")]
    DuplicateSource { source_id: String, format: SourceFormat, first: PathBuf, second: PathBuf },
    #[error("{path}: corrupt {format} source: {detail}")]
    Corrupt { path: PathBuf, format: SourceFormat, detail: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} is a {actual} source, expected {expected}")]
    WrongFormat { path: PathBuf, actual: SourceFormat, expected: SourceFormat },
}

/// Result of scanning a workspace directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Discovery {
    pub sources: Vec<SourceDescriptor>,
    /// Files with no recognized extension.
    pub skipped: Vec<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestionError + '_ {
    move |source| IngestionError::Io { path: path.to_path_buf(), source }
}

fn mismatch(path: &Path, expected: SourceFormat, detail: impl Into<String>) -> IngestionError {
    IngestionError::ContentMismatch { path: path.to_path_buf(), expected, detail: detail.into() }
}

fn corrupt(path: &Path, format: SourceFormat, detail: impl ToString) -> IngestionError {
    IngestionError::Corrupt { path: path.to_path_buf(), format, detail: detail.to_string() }
}

fn read_prefix(path: &Path, n: usize) -> Result<Vec<u8>, IngestionError> {
    let mut buf = Vec::with_capacity(n.min(1 << 16));
    fs::File::open(path).map_err(io_err(path))?.take(n as u64).read_to_end(&mut buf).map_err(io_err(path))?;
    Ok(buf)
}

fn looks_like_text(bytes: &[u8], complete: bool) -> Result<(), String> {
    if bytes.contains(&0) {
        return Err("contains NUL bytes".into());
    }
    match std::str::from_utf8(bytes) {
        Ok(_) => Ok(()),
        // A multi-byte character cut by the sniff window is fine.
        Err(e) if !complete && e.error_len().is_none() => Ok(()),
        Err(e) => Err(format!("invalid UTF-8 at byte {}", e.valid_up_to())),
    }
}

/// Checks that the file content agrees with the format implied by its extension.
pub fn sniff(path: &Path, format: SourceFormat) -> Result<(), IngestionError> {
    let len = fs::metadata(path).map_err(io_err(path))?.len() as usize;
    let head = read_prefix(path, SNIFF_BYTES)?;
    let complete = head.len() >= len;
    match format {
        SourceFormat::SqlDb => {
            if len != 0 && !head.starts_with(SQLITE_MAGIC) {
                return Err(mismatch(path, format, "missing SQLite header"));
            }
        }
        SourceFormat::Csv | SourceFormat::Text => {
            looks_like_text(&head, complete).map_err(|d| mismatch(path, format, d))?;
        }
        SourceFormat::JsonDoc => {
            looks_like_text(&head, complete).map_err(|d| mismatch(path, format, d))?;
            let text = String::from_utf8_lossy(&head);
            let first = text.trim_start_matches('\u{feff}').trim_start().chars().next();
            if !matches!(first, Some('[') | Some('{')) {
                return Err(mismatch(path, format, "does not start with '[' or '{'"));
            }
        }
    }
    Ok(())
}

/// Lists and sniffs every file in `workspace` (non-recursive), ordered by path.
pub fn discover_sources(workspace: &Path) -> Result<Discovery, IngestionError> {
    let dir_err = |source| IngestionError::UnreadableDirectory { path: workspace.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(workspace).map_err(dir_err)? {
        let entry = entry.map_err(|source| IngestionError::UnreadableDirectory { path: workspace.to_path_buf(), source })?;
        let path = entry.path();
        if path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();

    let mut discovery = Discovery::default();
    for path in paths {
        let Some(format) = path.extension().and_then(|e| e.to_str()).and_then(SourceFormat::from_extension) else {
            discovery.skipped.push(path);
            continue;
        };
        sniff(&path, format)?;
        let source_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(prev) = discovery.sources.iter().find(|s| s.source_id == source_id && s.format == format) {
            return Err(IngestionError::DuplicateSource {
                source_id,
                format,
                first: prev.path.clone(),
                second: path,
            });
        }
        let mut descriptor = SourceDescriptor { source_id, format, path, tables: Vec::new() };
        descriptor.tables = list_tables(&descriptor)?;
        discovery.sources.push(descriptor);
    }
    Ok(discovery)
}

fn list_tables(source: &SourceDescriptor) -> Result<Vec<String>, IngestionError> {
    Ok(match source.format {
        SourceFormat::Csv => vec![source.source_id.clone()],
        SourceFormat::Text => Vec::new(),
        SourceFormat::SqlDb => sqlite_tables(&open_sqlite(&source.path)?, &source.path)?,
        SourceFormat::JsonDoc => {
            let doc = read_json(&source.path)?;
            let (collections, _) =
                json::flatten_document(&doc, &source.source_id).map_err(|e| corrupt(&source.path, source.format, e))?;
            collections.into_iter().map(|c| c.name).collect()
        }
    })
}

/// A table read from a source with every cell as optional raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    /// Table segment of the aliases; `None` for single-table sources.
    pub segment: Option<String>,
    pub columns: Vec<String>,
    /// Declared SQL types, when the source has them.
    pub declared: Vec<Option<UnifiedType>>,
    pub rows: Vec<Vec<Option<String>>>,
    pub rejects: Vec<RejectedRow>,
}

/// A source row that could not be read structurally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based data row number (header excluded).
    pub row_number: usize,
    pub reason: String,
    pub raw: String,
}

/// Summary sentences and key terms of a text source in their original order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentDigest {
    pub summary: Vec<String>,
    pub key_terms: Vec<String>,
}

/// Reads every table of a structured or semi-structured source.
pub fn read_tables(source: &SourceDescriptor) -> Result<(Vec<RawTable>, Vec<Diagnostic>), IngestionError> {
    match source.format {
        SourceFormat::Csv => read_csv(&source.path).map(|(t, d)| (vec![t], d)),
        SourceFormat::SqlDb => read_sqlite(&source.path).map(|t| (t, Vec::new())),
        SourceFormat::JsonDoc => read_json_tables(source),
        SourceFormat::Text => Ok((Vec::new(), Vec::new())),
    }
}

fn dedupe_headers(raw: Vec<String>, subject: &str, diagnostics: &mut Vec<Diagnostic>) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(raw.len());
    for (i, name) in raw.into_iter().enumerate() {
        let base = if name.trim().is_empty() { format!("column_{}", i + 1) } else { name.trim().to_string() };
        let mut candidate = base.clone();
        let mut n = 2;
        while out.contains(&candidate) {
            candidate = format!("{base}_{n}");
            n += 1;
        }
        if candidate != name {
            diagnostics.push(Diagnostic::info(subject, format!("header '{name}' renamed to '{candidate}'")));
        }
        out.push(candidate);
    }
    out
}

fn read_csv(path: &Path) -> Result<(RawTable, Vec<Diagnostic>), IngestionError> {
    let subject = path.display().to_string();
    let mut diagnostics = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| corrupt(path, SourceFormat::Csv, e))?;
    let mut records = reader.byte_records();
    let header = match records.next() {
        None => {
            diagnostics.push(Diagnostic::warning(&subject, "CSV file has no header row"));
            Vec::new()
        }
        Some(rec) => {
            let rec = rec.map_err(|e| corrupt(path, SourceFormat::Csv, e))?;
            let mut names = Vec::with_capacity(rec.len());
            for (i, field) in rec.iter().enumerate() {
                let mut name = std::str::from_utf8(field)
                    .map_err(|_| corrupt(path, SourceFormat::Csv, "header is not UTF-8"))?
                    .to_string();
                if i == 0 {
                    name = name.trim_start_matches('\u{feff}').to_string();
                }
                names.push(name);
            }
            dedupe_headers(names, &subject, &mut diagnostics)
        }
    };
    let mut table = RawTable {
        segment: None,
        declared: vec![None; header.len()],
        columns: header,
        rows: Vec::new(),
        rejects: Vec::new(),
    };
    let mut row_number = 0;
    for rec in records {
        let rec = rec.map_err(|e| corrupt(path, SourceFormat::Csv, e))?;
        row_number += 1;
        let raw = rec.iter().map(|f| String::from_utf8_lossy(f).into_owned()).collect::<Vec<_>>().join(",");
        if rec.len() != table.columns.len() {
            table.rejects.push(RejectedRow {
                row_number,
                reason: format!("expected {} fields, found {}", table.columns.len(), rec.len()),
                raw,
            });
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        let mut bad_utf8 = false;
        for field in rec.iter() {
            match std::str::from_utf8(field) {
                Ok(s) if s.trim().is_empty() => row.push(None),
                Ok(s) => row.push(Some(s.to_string())),
                Err(_) => bad_utf8 = true,
            }
        }
        if bad_utf8 {
            table.rejects.push(RejectedRow { row_number, reason: "field is not valid UTF-8".into(), raw });
            continue;
        }
        table.rows.push(row);
    }
    if !table.rejects.is_empty() {
        diagnostics.push(Diagnostic::warning(&subject, format!("{} malformed row(s) skipped", table.rejects.len())));
    }
    Ok((table, diagnostics))
}

fn open_sqlite(path: &Path) -> Result<Connection, IngestionError> {
    Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
        .map_err(|e| corrupt(path, SourceFormat::SqlDb, e))
}

fn sqlite_tables(conn: &Connection, path: &Path) -> Result<Vec<String>, IngestionError> {
    let mut stmt = conn
        .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name")
        .map_err(|e| corrupt(path, SourceFormat::SqlDb, e))?;
    let names = stmt
        .query_map([], |r| r.get::<_, String>(0))
        .and_then(|rows| rows.collect::<Result<Vec<_>, _>>())
        .map_err(|e| corrupt(path, SourceFormat::SqlDb, e))?;
    Ok(names)
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

pub(crate) fn sql_value_text(v: ValueRef<'_>) -> Option<String> {
    match v {
        ValueRef::Null => None,
        ValueRef::Integer(i) => Some(i.to_string()),
        ValueRef::Real(f) => Some(render_number(Number::Float(f))),
        ValueRef::Text(t) => {
            let s = String::from_utf8_lossy(t).into_owned();
            (!s.trim().is_empty()).then_some(s)
        }
        ValueRef::Blob(b) => Some(format!("0x{}", hex::encode(b))),
    }
}

fn read_sqlite(path: &Path) -> Result<Vec<RawTable>, IngestionError> {
    let conn = open_sqlite(path)?;
    let err = |e: rusqlite::Error| corrupt(path, SourceFormat::SqlDb, e);
    let mut tables = Vec::new();
    for name in sqlite_tables(&conn, path)? {
        let mut info = conn.prepare(&format!("PRAGMA table_info({})", quote_ident(&name))).map_err(err)?;
        let cols: Vec<(String, String)> = info
            .query_map([], |r| Ok((r.get::<_, String>(1)?, r.get::<_, Option<String>>(2)?.unwrap_or_default())))
            .and_then(|rows| rows.collect::<Result<Vec<_>, _>>())
            .map_err(err)?;
        let quoted = quote_ident(&name);
        let mut stmt = conn
            .prepare(&format!("SELECT * FROM {quoted} ORDER BY rowid"))
            .or_else(|_| conn.prepare(&format!("SELECT * FROM {quoted}")))
            .map_err(err)?;
        let width = cols.len();
        let mut rows = Vec::new();
        let mut cursor = stmt.query([]).map_err(err)?;
        while let Some(row) = cursor.next().map_err(err)? {
            let mut out = Vec::with_capacity(width);
            for i in 0..width {
                out.push(sql_value_text(row.get_ref(i).map_err(err)?));
            }
            rows.push(out);
        }
        tables.push(RawTable {
            segment: Some(name),
            declared: cols.iter().map(|(_, decl)| UnifiedType::from_sql_decl(decl)).collect(),
            columns: cols.into_iter().map(|(n, _)| n).collect(),
            rows,
            rejects: Vec::new(),
        });
    }
    Ok(tables)
}

fn read_json(path: &Path) -> Result<serde_json::Value, IngestionError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(text.trim_start_matches('\u{feff}')).map_err(|e| corrupt(path, SourceFormat::JsonDoc, e))
}

fn read_json_tables(source: &SourceDescriptor) -> Result<(Vec<RawTable>, Vec<Diagnostic>), IngestionError> {
    let doc = read_json(&source.path)?;
    let array_form = json::is_array_form(&doc);
    let (collections, skipped) =
        json::flatten_document(&doc, &source.source_id).map_err(|e| corrupt(&source.path, source.format, e))?;
    let diagnostics = skipped
        .into_iter()
        .map(|k| Diagnostic::info(source.path.display().to_string(), format!("top-level key '{k}' is not an array; skipped")))
        .collect();
    let tables = collections
        .into_iter()
        .map(|c| {
            let root = array_form && c.name == source.source_id;
            RawTable {
                segment: (!root).then_some(c.name),
                declared: vec![None; c.columns.len()],
                columns: c.columns,
                rows: c.rows,
                rejects: Vec::new(),
            }
        })
        .collect();
    Ok((tables, diagnostics))
}

/// Resolves the type of column `index` of `table`.
pub fn column_type(table: &RawTable, index: usize, threshold: f64) -> (UnifiedType, usize) {
    let cells = table.rows.iter().filter_map(|r| r[index].as_deref());
    if let Some(declared) = table.declared[index] {
        let outliers = cells.filter(|c| !conforms(c, declared)).count();
        return (declared, outliers);
    }
    let mut tally = TypeTally::default();
    for c in cells {
        tally.observe(c);
    }
    tally.resolve(threshold)
}

/// Whether a non-empty raw cell parses under `ty`.
pub fn conforms(raw: &str, ty: UnifiedType) -> bool {
    match ty {
        UnifiedType::Int => matches!(parse_number(raw), Some(Number::Int(_)))
            || matches!(parse_number(raw), Some(Number::Float(f)) if f.fract() == 0.0),
        UnifiedType::Float => parse_number(raw).is_some(),
        UnifiedType::Bool => parse_bool(raw).is_some(),
        UnifiedType::Date => parse_date(raw).is_some(),
        UnifiedType::DateTime => parse_datetime(raw).is_some() || parse_date(raw).is_some(),
        UnifiedType::Text => true,
    }
}

/// Columns and diagnostics produced for one source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceExtraction {
    pub columns: Vec<ColumnMeta>,
    pub diagnostics: Vec<Diagnostic>,
    pub document: Option<DocumentDigest>,
}

/// Extracts typed, sampled column metadata from one source. Text sources
/// delegate to [`summarize_text`].
pub fn extract_columns(
    source: &SourceDescriptor,
    config: &IngestionConfig,
    llm: Option<(&Provider, &CascadeSession)>,
) -> Result<SourceExtraction, IngestionError> {
    if source.format == SourceFormat::Text {
        return summarize_text(source, config, llm);
    }
    let (tables, mut diagnostics) = read_tables(source)?;
    let origin = SourceRef::from(source);
    let mut columns = Vec::new();
    for table in &tables {
        let subject = match &table.segment {
            Some(t) => format!("{}.{}", source.source_id, t),
            None => source.source_id.clone(),
        };
        if table.rows.is_empty() {
            diagnostics.push(Diagnostic::warning(&subject, "table has no readable rows; samples are empty"));
        }
        for (i, name) in table.columns.iter().enumerate() {
            let (ty, outliers) = column_type(table, i, config.type_inference_threshold);
            if outliers > 0 {
                diagnostics.push(Diagnostic::warning(
                    &subject,
                    format!("column '{name}': {outliers} cell(s) do not parse as {ty}"),
                ));
            }
            let mut sampler = ReservoirSampler::new(config.sample_cap, config.seed);
            for row in &table.rows {
                sampler.offer(row[i].as_deref().map(|v| canonicalize(v, ty)));
            }
            columns.push(ColumnMeta {
                alias: Alias::new(source.format, &source.source_id, table.segment.as_deref(), name),
                unified_type: ty,
                samples: sampler.finish(),
                origin: origin.clone(),
                role: ColumnRole::Data,
            });
        }
    }
    Ok(SourceExtraction { columns, diagnostics, document: None })
}

/// Builds the pseudo-schema of a text source: a `summary` column holding
/// summary sentences and a `key_terms` column holding salient terms.
pub fn summarize_text(
    source: &SourceDescriptor,
    config: &IngestionConfig,
    llm: Option<(&Provider, &CascadeSession)>,
) -> Result<SourceExtraction, IngestionError> {
    if source.format != SourceFormat::Text {
        return Err(IngestionError::WrongFormat {
            path: source.path.clone(),
            actual: source.format,
            expected: SourceFormat::Text,
        });
    }
    let content = fs::read_to_string(&source.path).map_err(io_err(&source.path))?;
    let digest = text::summarize_document(&source.source_id, &content, llm);
    let origin = SourceRef::from(source);
    let column = |name: &str, values: &[String]| {
        let mut sampler = ReservoirSampler::new(config.sample_cap, config.seed);
        for v in values {
            sampler.offer(Some(canonicalize(v, UnifiedType::Text)));
        }
        ColumnMeta {
            alias: Alias::new(SourceFormat::Text, &source.source_id, None, name),
            unified_type: UnifiedType::Text,
            samples: sampler.finish(),
            origin: origin.clone(),
            role: ColumnRole::Pseudo,
        }
    };
    let columns = vec![column(SUMMARY_COLUMN, &digest.summary), column(KEY_TERMS_COLUMN, &digest.key_terms)];
    Ok(SourceExtraction {
        columns,
        diagnostics: digest.diagnostics,
        document: Some(DocumentDigest { summary: digest.summary, key_terms: digest.key_terms }),
    })
}
