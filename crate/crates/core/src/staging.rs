//! The unified relational staging store.
//!
//! Every tabular source is loaded into one in-memory SQLite database so that
//! generated queries can join across formats. After loading the connection is
//! switched to `query_only`, and [`StagingStore::execute_query`] additionally
//! refuses anything that is not a single read-only `SELECT`/`WITH` statement
//! before it reaches the engine.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rusqlite::types::{Value, ValueRef};
use rusqlite::{params_from_iter, Connection, DatabaseName};
use serde::{Deserialize, Serialize};

use crate::ingestion::{
    self, parse_bool, parse_date, parse_datetime, parse_number, render_date, render_datetime,
    IngestionError, Number, RawTable, SourceDescriptor, SourceFormat, TypeTally, UnifiedType,
};
use crate::metagraph::{Alias, MetaGraph};
use crate::util::Diagnostic;

pub const TEXT_DOCUMENTS: &str = "text_documents";
pub const REJECTS_TABLE: &str = "staging_rejects";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResourceLimits {
    pub max_rows: usize,
    pub timeout_ms: u64,
    pub memory_bytes: i64,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self { max_rows: 10_000, timeout_ms: 10_000, memory_bytes: 256 * 1024 * 1024 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StagingError {
    #[error(transparent)]
    Ingestion(#[from] IngestionError),
    #[error("cannot stage {table}: {detail}")]
    Materialize { table: String, detail: String },
    #[error("policy violation: {0}")]
    PolicyViolation(String),
    /// The engine refused to compile the program; the message is verbatim.
    #[error("{0}")]
    Syntax(String),
    /// The engine failed while running the program; the message is verbatim.
    #[error("{0}")]
    Execution(String),
    #[error("query exceeded the {0:?} time limit")]
    Timeout(Duration),
    #[error("cannot persist staging store: {0}")]
    Persist(String),
}

impl StagingError {
    /// Text handed back to the code generator for self-correction.
    pub fn engine_message(&self) -> String {
        self.to_string()
    }
}

fn engine(e: rusqlite::Error) -> String {
    match e {
        rusqlite::Error::SqliteFailure(_, Some(msg)) => msg,
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedColumn {
    pub name: String,
    pub unified_type: UnifiedType,
    /// The catalog column stored here.
    pub alias: Option<Alias>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedTable {
    pub name: String,
    pub columns: Vec<StagedColumn>,
    pub source_id: String,
    pub format: SourceFormat,
    /// Alias prefix of the source table, e.g. `sqlite.users.users`.
    pub origin: String,
    pub row_count: usize,
    pub rejected: usize,
}

/// A quarantined source row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagingReject {
    pub staging_table: String,
    pub row_number: usize,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(f) => Some(*f),
            Cell::Text(t) => parse_number(t).map(Number::as_f64),
            Cell::Null => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    fn from_ref(v: ValueRef<'_>) -> Cell {
        match v {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(i) => Cell::Int(i),
            ValueRef::Real(f) => Cell::Float(f),
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Text(format!("0x{}", hex::encode(b))),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => f.write_str("NULL"),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Float(x) => f.write_str(&ingestion::render_number(Number::Float(*x))),
            Cell::Text(t) => f.write_str(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultColumn {
    pub name: String,
    pub unified_type: UnifiedType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub columns: Vec<ResultColumn>,
    pub rows: Vec<Vec<Cell>>,
    /// Set when the row cap cut the result short.
    pub truncated: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl QueryResult {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn infer_result_type(rows: &[Vec<Cell>], index: usize) -> UnifiedType {
    let mut ints = 0;
    let mut floats = 0;
    let mut tally = TypeTally::default();
    let mut texts = 0;
    for row in rows {
        match &row[index] {
            Cell::Null => {}
            Cell::Int(_) => ints += 1,
            Cell::Float(_) => floats += 1,
            Cell::Text(t) => {
                texts += 1;
                tally.observe(t);
            }
        }
    }
    match (ints, floats, texts) {
        (0, 0, 0) => UnifiedType::Text,
        (_, 0, 0) => UnifiedType::Int,
        (_, _, 0) => UnifiedType::Float,
        (0, 0, _) => tally.resolve(1.0).0,
        _ => UnifiedType::Text,
    }
}

fn sanitize(raw: &str) -> String {
    let mut s: String = raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if s.is_empty() {
        s.push_str("column");
    }
    if s.starts_with(|c: char| c.is_ascii_digit()) {
        s.insert_str(0, "c_");
    }
    s
}

fn quote(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn unique_name(base: String, taken: &mut BTreeSet<String>, subject: &str, diagnostics: &mut Vec<Diagnostic>) -> String {
    let mut candidate = base.clone();
    let mut n = 2;
    while taken.contains(&candidate.to_ascii_lowercase()) {
        candidate = format!("{base}_{n}");
        n += 1;
    }
    if candidate != base {
        diagnostics.push(Diagnostic::warning(subject, format!("name '{base}' already used; staged as '{candidate}'")));
    }
    taken.insert(candidate.to_ascii_lowercase());
    candidate
}

/// Converts a raw cell to its stored value, or `None` if it does not parse.
fn typed_value(raw: &str, ty: UnifiedType) -> Option<Value> {
    let s = raw.trim();
    match ty {
        UnifiedType::Int => match parse_number(s)? {
            Number::Int(i) => Some(Value::Integer(i)),
            Number::Float(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Some(Value::Integer(f as i64)),
            Number::Float(_) => None,
        },
        UnifiedType::Float => parse_number(s).map(|n| Value::Real(n.as_f64())),
        UnifiedType::Bool => parse_bool(s).map(|b| Value::Integer(i64::from(b))),
        UnifiedType::Date => parse_date(s).map(|d| Value::Text(render_date(d))),
        UnifiedType::DateTime => parse_datetime(s)
            .or_else(|| parse_date(s).and_then(|d| d.and_hms_opt(0, 0, 0)))
            .map(|dt| Value::Text(render_datetime(dt))),
        UnifiedType::Text => Some(Value::Text(s.to_string())),
    }
}

/// The read-only store. Safe to share across threads; queries serialize on
/// the connection.
pub struct StagingStore {
    conn: Mutex<Connection>,
    tables: Vec<StagedTable>,
    columns: BTreeMap<Alias, (String, String)>,
    rejects: Vec<StagingReject>,
    limits: ResourceLimits,
    diagnostics: Vec<Diagnostic>,
}

impl fmt::Debug for StagingStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StagingStore").field("tables", &self.tables).field("limits", &self.limits).finish()
    }
}

struct Loader {
    conn: Connection,
    tables: Vec<StagedTable>,
    columns: BTreeMap<Alias, (String, String)>,
    rejects: Vec<StagingReject>,
    table_names: BTreeSet<String>,
    diagnostics: Vec<Diagnostic>,
}

impl Loader {
    fn exec(&self, table: &str, sql: &str) -> Result<(), StagingError> {
        self.conn
            .execute_batch(sql)
            .map_err(|e| StagingError::Materialize { table: table.to_string(), detail: engine(e) })
    }

    fn load_table(&mut self, source: &SourceDescriptor, raw: RawTable, graph: &MetaGraph) -> Result<(), StagingError> {
        let mut parts = vec![source.format.alias_segment().to_string(), source.source_id.clone()];
        parts.extend(raw.segment.clone());
        let origin = Alias::new(source.format, &source.source_id, raw.segment.as_deref(), "_").table_prefix();
        let base = sanitize(&parts.join("_"));
        let name = unique_name(base, &mut self.table_names, &origin, &mut self.diagnostics);

        let mut taken = BTreeSet::new();
        let mut columns = Vec::with_capacity(raw.columns.len());
        for (i, col) in raw.columns.iter().enumerate() {
            let alias = Alias::new(source.format, &source.source_id, raw.segment.as_deref(), col);
            let ty = match graph.get(&alias) {
                Some(meta) => meta.unified_type,
                None => ingestion::column_type(&raw, i, 0.99).0,
            };
            let staged = unique_name(sanitize(col), &mut taken, &origin, &mut self.diagnostics);
            self.columns.insert(alias.clone(), (name.clone(), staged.clone()));
            columns.push(StagedColumn { name: staged, unified_type: ty, alias: Some(alias) });
        }

        let decls: Vec<String> =
            columns.iter().map(|c| format!("{} {}", quote(&c.name), c.unified_type.sql_decl())).collect();
        let body = if decls.is_empty() { "\"_empty\" TEXT".to_string() } else { decls.join(", ") };
        // Names derived from `sqlite.*` aliases start with the engine's
        // reserved prefix, which it only accepts while the schema is writable.
        let reserved = name.to_ascii_lowercase().starts_with("sqlite_");
        if reserved {
            self.exec(&name, "PRAGMA writable_schema = ON;")?;
        }
        let created = self.exec(&name, &format!("CREATE TABLE {} ({body});", quote(&name)));
        if reserved {
            self.exec(&name, "PRAGMA writable_schema = OFF;")?;
        }
        created?;

        let mut rejected = raw.rejects.len();
        for r in raw.rejects {
            self.rejects.push(StagingReject { staging_table: name.clone(), row_number: r.row_number, reason: r.reason, raw: r.raw });
        }
        let mut row_count = 0;
        if !columns.is_empty() {
            let placeholders = vec!["?"; columns.len()].join(", ");
            let sql = format!("INSERT INTO {} VALUES ({placeholders})", quote(&name));
            let tx = self.conn.unchecked_transaction().map_err(|e| StagingError::Materialize { table: name.clone(), detail: engine(e) })?;
            {
                let mut stmt = tx.prepare(&sql).map_err(|e| StagingError::Materialize { table: name.clone(), detail: engine(e) })?;
                for (n, row) in raw.rows.iter().enumerate() {
                    let mut values = Vec::with_capacity(row.len());
                    let mut failure = None;
                    for (cell, col) in row.iter().zip(&columns) {
                        match cell {
                            None => values.push(Value::Null),
                            Some(text) => match typed_value(text, col.unified_type) {
                                Some(v) => values.push(v),
                                None => {
                                    failure = Some(format!("column {}: '{}' is not {}", col.name, text, col.unified_type));
                                    break;
                                }
                            },
                        }
                    }
                    if let Some(reason) = failure {
                        rejected += 1;
                        let raw_text = row.iter().map(|c| c.clone().unwrap_or_default()).collect::<Vec<_>>().join(",");
                        self.rejects.push(StagingReject { staging_table: name.clone(), row_number: n + 1, reason, raw: raw_text });
                        continue;
                    }
                    stmt.execute(params_from_iter(values.iter()))
                        .map_err(|e| StagingError::Materialize { table: name.clone(), detail: engine(e) })?;
                    row_count += 1;
                }
            }
            tx.commit().map_err(|e| StagingError::Materialize { table: name.clone(), detail: engine(e) })?;
        }
        if rejected > 0 {
            self.diagnostics.push(Diagnostic::warning(&origin, format!("{rejected} row(s) quarantined into {REJECTS_TABLE}")));
        }
        self.tables.push(StagedTable {
            name,
            columns,
            source_id: source.source_id.clone(),
            format: source.format,
            origin,
            row_count,
            rejected,
        });
        Ok(())
    }

    fn load_documents(&mut self, texts: &[&SourceDescriptor], graph: &MetaGraph) -> Result<(), StagingError> {
        let name = TEXT_DOCUMENTS.to_string();
        self.table_names.insert(name.clone());
        self.exec(
            &name,
            &format!(
                "CREATE TABLE {name} (source_id TEXT, chunk_index INTEGER, content TEXT, summary TEXT, key_terms TEXT);"
            ),
        )?;
        let mut row_count = 0;
        for source in texts {
            let content = std::fs::read_to_string(&source.path)
                .map_err(|source_err| IngestionError::Io { path: source.path.clone(), source: source_err })?;
            let (summary, terms) = match graph.documents().get(&source.source_id) {
                Some(d) => (d.summary.join(" "), d.key_terms.join(", ")),
                None => (String::new(), String::new()),
            };
            for (i, chunk) in crate::ingestion::text::paragraphs(&content).iter().enumerate() {
                self.conn
                    .execute(
                        &format!("INSERT INTO {name} VALUES (?1, ?2, ?3, ?4, ?5)"),
                        rusqlite::params![source.source_id, i as i64, chunk, summary, terms],
                    )
                    .map_err(|e| StagingError::Materialize { table: name.clone(), detail: engine(e) })?;
                row_count += 1;
            }
            for pseudo in [ingestion::SUMMARY_COLUMN, ingestion::KEY_TERMS_COLUMN] {
                let alias = Alias::new(SourceFormat::Text, &source.source_id, None, pseudo);
                self.columns.insert(alias, (name.clone(), pseudo.to_string()));
            }
        }
        let col = |n: &str, t| StagedColumn { name: n.to_string(), unified_type: t, alias: None };
        self.tables.push(StagedTable {
            name,
            columns: vec![
                col("source_id", UnifiedType::Text),
                col("chunk_index", UnifiedType::Int),
                col("content", UnifiedType::Text),
                col("summary", UnifiedType::Text),
                col("key_terms", UnifiedType::Text),
            ],
            source_id: texts.iter().map(|s| s.source_id.as_str()).collect::<Vec<_>>().join(","),
            format: SourceFormat::Text,
            origin: "txt".to_string(),
            row_count,
            rejected: 0,
        });
        Ok(())
    }
}

/// Loads every source into a fresh in-memory store.
pub fn materialize(
    sources: &[SourceDescriptor],
    graph: &MetaGraph,
    limits: &ResourceLimits,
) -> Result<StagingStore, StagingError> {
    let conn = Connection::open_in_memory().map_err(|e| StagingError::Materialize { table: "*".into(), detail: engine(e) })?;
    let mut loader = Loader {
        conn,
        tables: Vec::new(),
        columns: BTreeMap::new(),
        rejects: Vec::new(),
        table_names: BTreeSet::from([REJECTS_TABLE.to_string()]),
        diagnostics: Vec::new(),
    };
    let mut texts = Vec::new();
    let mut ordered: Vec<&SourceDescriptor> = sources.iter().collect();
    ordered.sort_by(|a, b| a.path.cmp(&b.path));
    for source in ordered {
        if source.format == SourceFormat::Text {
            texts.push(source);
            continue;
        }
        let (tables, diagnostics) = ingestion::read_tables(source)?;
        loader.diagnostics.extend(diagnostics);
        for raw in tables {
            loader.load_table(source, raw, graph)?;
        }
    }
    if !texts.is_empty() {
        loader.load_documents(&texts, graph)?;
    }
    loader.exec(
        REJECTS_TABLE,
        &format!("CREATE TABLE {REJECTS_TABLE} (staging_table TEXT, row_number INTEGER, reason TEXT, raw TEXT);"),
    )?;
    for r in &loader.rejects {
        loader
            .conn
            .execute(
                &format!("INSERT INTO {REJECTS_TABLE} VALUES (?1, ?2, ?3, ?4)"),
                rusqlite::params![r.staging_table, r.row_number as i64, r.reason, r.raw],
            )
            .map_err(|e| StagingError::Materialize { table: REJECTS_TABLE.into(), detail: engine(e) })?;
    }
    loader.exec("*", "PRAGMA query_only = ON;")?;
    if limits.memory_bytes > 0 {
        // SQLite's heap ceiling is process wide; it only ever needs raising.
        let current: i64 = loader.conn.query_row("PRAGMA hard_heap_limit", [], |r| r.get(0)).unwrap_or(0);
        if current != 0 && current < limits.memory_bytes || current == 0 {
            let _ = loader.conn.query_row(&format!("PRAGMA hard_heap_limit = {}", limits.memory_bytes), [], |_| Ok(()));
        }
    }
    Ok(StagingStore {
        conn: Mutex::new(loader.conn),
        tables: loader.tables,
        columns: loader.columns,
        rejects: loader.rejects,
        limits: limits.clone(),
        diagnostics: loader.diagnostics,
    })
}

fn strip_comments(sql: &str) -> String {
    let mut out = String::with_capacity(sql.len());
    let bytes: Vec<char> = sql.chars().collect();
    let mut i = 0;
    let mut quote: Option<char> = None;
    while i < bytes.len() {
        let c = bytes[i];
        if let Some(q) = quote {
            out.push(c);
            if c == q {
                quote = None;
            }
            i += 1;
            continue;
        }
        if c == '\'' || c == '"' || c == '`' {
            quote = Some(c);
            out.push(c);
            i += 1;
        } else if c == '-' && bytes.get(i + 1) == Some(&'-') {
            while i < bytes.len() && bytes[i] != '\n' {
                i += 1;
            }
            out.push(' ');
        } else if c == '/' && bytes.get(i + 1) == Some(&'*') {
            i += 2;
            while i < bytes.len() && !(bytes[i] == '*' && bytes.get(i + 1) == Some(&'/')) {
                i += 1;
            }
            i += 2;
            out.push(' ');
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

fn has_second_statement(stripped: &str) -> bool {
    let mut quote: Option<char> = None;
    for (i, c) in stripped.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if matches!(c, '\'' | '"' | '`') => quote = Some(c),
            None if c == ';' => return !stripped[i + 1..].trim_matches(|c: char| c.is_whitespace() || c == ';').is_empty(),
            None => {}
        }
    }
    false
}

/// Cheap lexical gate: the program must be one statement starting with
/// `SELECT` or `WITH`.
pub fn check_statement_class(program: &str) -> Result<(), StagingError> {
    let stripped = strip_comments(program);
    if has_second_statement(&stripped) {
        return Err(StagingError::PolicyViolation("only a single statement is allowed".into()));
    }
    let first: String = stripped.trim_start().chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    match first.to_ascii_uppercase().as_str() {
        "SELECT" | "WITH" => Ok(()),
        "" => Err(StagingError::PolicyViolation("empty program".into())),
        other => Err(StagingError::PolicyViolation(format!("{other} statements are not allowed; only read-only SELECT queries run"))),
    }
}

impl StagingStore {
    pub fn tables(&self) -> &[StagedTable] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Option<&StagedTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn rejects(&self) -> &[StagingReject] {
        &self.rejects
    }

    pub fn limits(&self) -> &ResourceLimits {
        &self.limits
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    /// Staging `(table, column)` holding a catalog column.
    pub fn locate(&self, alias: &Alias) -> Option<(&str, &str)> {
        self.columns.get(alias).map(|(t, c)| (t.as_str(), c.as_str()))
    }

    pub fn column_map(&self) -> &BTreeMap<Alias, (String, String)> {
        &self.columns
    }

    /// One line per table: `name(col TYPE, ...)  -- rows, origin`.
    pub fn schema_text(&self) -> String {
        let mut tables: Vec<&StagedTable> = self.tables.iter().collect();
        tables.sort_by(|a, b| a.name.cmp(&b.name));
        let mut out = String::new();
        for t in tables {
            let cols: Vec<String> = t.columns.iter().map(|c| format!("{} {}", c.name, c.unified_type)).collect();
            out.push_str(&format!("{}({})  -- {} rows from {}\n", t.name, cols.join(", "), t.row_count, t.origin));
        }
        out
    }

    /// `alias -> table.column` lines for the columns that can be joined on.
    pub fn alias_mapping_text(&self) -> String {
        self.columns
            .iter()
            .filter(|(a, _)| a.format != SourceFormat::Text)
            .map(|(a, (t, c))| format!("{a} -> {t}.{c}\n"))
            .collect()
    }

    /// Compiles `program` without running it: statement class, single
    /// statement, engine-level name resolution and read-only status.
    pub fn validate(&self, program: &str) -> Result<(), StagingError> {
        check_statement_class(program)?;
        let conn = self.conn.lock().expect("staging connection poisoned");
        let stmt = conn.prepare(program).map_err(|e| match e {
            rusqlite::Error::MultipleStatement => StagingError::PolicyViolation("only a single statement is allowed".into()),
            other => StagingError::Syntax(engine(other)),
        })?;
        if !stmt.readonly() {
            return Err(StagingError::PolicyViolation("statement would modify the store".into()));
        }
        Ok(())
    }

    /// Runs one read-only query under the store's limits.
    pub fn execute_query(&self, program: &str) -> Result<QueryResult, StagingError> {
        self.execute_with_limits(program, &self.limits)
    }

    pub fn execute_with_limits(&self, program: &str, limits: &ResourceLimits) -> Result<QueryResult, StagingError> {
        check_statement_class(program)?;
        let conn = self.conn.lock().expect("staging connection poisoned");
        let mut stmt = conn.prepare(program).map_err(|e| match e {
            rusqlite::Error::MultipleStatement => StagingError::PolicyViolation("only a single statement is allowed".into()),
            other => StagingError::Syntax(engine(other)),
        })?;
        if !stmt.readonly() {
            return Err(StagingError::PolicyViolation("statement would modify the store".into()));
        }
        let names: Vec<String> = stmt.column_names().into_iter().map(str::to_string).collect();
        let timeout = Duration::from_millis(limits.timeout_ms);
        let deadline = Instant::now() + timeout;
        conn.progress_handler(1000, Some(move || Instant::now() > deadline));
        let outcome = (|| {
            let mut rows = Vec::new();
            let mut truncated = false;
            let mut cursor = stmt.query([])?;
            while let Some(row) = cursor.next()? {
                if rows.len() >= limits.max_rows {
                    truncated = true;
                    break;
                }
                rows.push((0..names.len()).map(|i| row.get_ref(i).map(Cell::from_ref)).collect::<Result<Vec<_>, _>>()?);
            }
            Ok::<_, rusqlite::Error>((rows, truncated))
        })();
        conn.progress_handler(0, None::<fn() -> bool>);
        let (rows, truncated) = outcome.map_err(|e| match e {
            rusqlite::Error::SqliteFailure(err, _) if err.code == rusqlite::ErrorCode::OperationInterrupted => {
                StagingError::Timeout(timeout)
            }
            other => StagingError::Execution(engine(other)),
        })?;
        let columns =
            names.into_iter().enumerate().map(|(i, name)| ResultColumn { name, unified_type: infer_result_type(&rows, i) }).collect();
        let mut diagnostics = Vec::new();
        if truncated {
            diagnostics.push(Diagnostic::warning("query", format!("result truncated at {} rows", limits.max_rows)));
        }
        Ok(QueryResult { columns, rows, truncated, diagnostics })
    }

    /// Canonical text rendering of the whole database: every table's DDL and
    /// rows in rowid order. Two stores hold the same data iff dumps match.
    pub fn dump(&self) -> String {
        let conn = self.conn.lock().expect("staging connection poisoned");
        let mut out = String::new();
        let mut schema = conn
            .prepare("SELECT name, sql FROM sqlite_master WHERE type = 'table' ORDER BY name")
            .expect("schema query compiles");
        let tables: Vec<(String, String)> = schema
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?)))
            .and_then(|rows| rows.collect())
            .expect("schema query runs");
        for (name, sql) in tables {
            out.push_str(&sql);
            out.push('\n');
            let mut stmt = conn.prepare(&format!("SELECT * FROM {} ORDER BY rowid", quote(&name))).expect("dump query compiles");
            let width = stmt.column_count();
            let mut rows = stmt.query([]).expect("dump query runs");
            while let Some(row) = rows.next().expect("dump row") {
                let cells: Vec<String> = (0..width)
                    .map(|i| match row.get_ref(i).expect("dump cell") {
                        ValueRef::Null => "NULL".to_string(),
                        ValueRef::Integer(v) => v.to_string(),
                        ValueRef::Real(v) => format!("{v:?}"),
                        ValueRef::Text(t) => format!("{:?}", String::from_utf8_lossy(t)),
                        ValueRef::Blob(b) => format!("x'{}'", hex::encode(b)),
                    })
                    .collect();
                out.push_str(&cells.join("|"));
                out.push('\n');
            }
        }
        out
    }

    /// Writes the store to a single database file.
    pub fn persist(&self, path: &Path) -> Result<(), StagingError> {
        if path.exists() {
            std::fs::remove_file(path).map_err(|e| StagingError::Persist(e.to_string()))?;
        }
        let conn = self.conn.lock().expect("staging connection poisoned");
        conn.backup(DatabaseName::Main, path, None).map_err(|e| StagingError::Persist(engine(e)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::{discover_sources, IngestionConfig};
    use crate::metagraph::build_metagraph;
    use std::fs;

    fn store(files: &[(&str, &str)]) -> (tempfile::TempDir, StagingStore) {
        let dir = tempfile::tempdir().unwrap();
        for (name, body) in files {
            fs::write(dir.path().join(name), body).unwrap();
        }
        let d = discover_sources(dir.path()).unwrap();
        let g = build_metagraph(&d.sources, &IngestionConfig::default(), None).unwrap();
        let s = materialize(&d.sources, &g, &ResourceLimits::default()).unwrap();
        (dir, s)
    }

    #[test]
    fn csv_is_staged_with_types() {
        let (_d, s) = store(&[("sales.csv", "user_id,amount\nu1,3.5\nu2,4.0\n")]);
        let t = s.table("csv_sales").unwrap();
        assert_eq!(t.row_count, 2);
        let types: Vec<_> = t.columns.iter().map(|c| (c.name.as_str(), c.unified_type)).collect();
        assert_eq!(types, vec![("user_id", UnifiedType::Text), ("amount", UnifiedType::Float)]);
        let r = s.execute_query("SELECT COUNT(*) FROM csv_sales").unwrap();
        assert_eq!(r.rows, vec![vec![Cell::Int(2)]]);
    }

    #[test]
    fn json_nested_columns_are_sanitized() {
        let (_d, s) = store(&[("events.json", r#"[{"a":{"b":1}},{"a":{"b":2}},{"a":{"b":3}}]"#)]);
        let t = s.table("json_events").unwrap();
        assert_eq!(t.columns[0].name, "a_b");
        assert_eq!(t.row_count, 3);
        let alias: Alias = "json.events.a\\u002eb".parse().unwrap();
        assert_eq!(s.locate(&alias), Some(("json_events", "a_b")));
    }

    #[test]
    fn malformed_rows_are_quarantined() {
        let mut body = String::from("id,value\n");
        for i in 0..100 {
            if i == 37 {
                body.push_str("37,1,extra\n");
            } else {
                body.push_str(&format!("{i},{}\n", i * 2));
            }
        }
        let (_d, s) = store(&[("m.csv", &body)]);
        assert_eq!(s.table("csv_m").unwrap().row_count, 99);
        assert_eq!(s.rejects().len(), 1);
        assert_eq!(s.rejects()[0].row_number, 38);
        let r = s.execute_query("SELECT reason FROM staging_rejects").unwrap();
        assert_eq!(r.rows.len(), 1);
    }

    #[test]
    fn type_outliers_are_quarantined() {
        let mut body = String::from("n\n");
        for i in 0..200 {
            body.push_str(&format!("{i}\n"));
        }
        body.push_str("oops\n");
        let (_d, s) = store(&[("n.csv", &body)]);
        let t = s.table("csv_n").unwrap();
        assert_eq!(t.columns[0].unified_type, UnifiedType::Int);
        assert_eq!((t.row_count, t.rejected), (200, 1));
    }

    #[test]
    fn writes_are_rejected_and_store_unchanged() {
        let (_d, s) = store(&[("sales.csv", "user_id,amount\nu1,3.5\n")]);
        let before = s.dump();
        for bad in [
            "DROP TABLE csv_sales",
            "DELETE FROM csv_sales",
            "  /* x */ INSERT INTO csv_sales VALUES ('a', 1)",
            "WITH x AS (SELECT 1) DELETE FROM csv_sales",
            "SELECT 1; DROP TABLE csv_sales",
            "PRAGMA query_only = OFF",
            "ATTACH DATABASE ':memory:' AS other",
        ] {
            assert!(matches!(s.execute_query(bad), Err(StagingError::PolicyViolation(_))), "{bad}");
        }
        assert_eq!(s.dump(), before);
    }

    #[test]
    fn engine_errors_are_verbatim() {
        let (_d, s) = store(&[("sales.csv", "user_id,amount\nu1,3.5\n")]);
        match s.execute_query("SELECT usr_id FROM csv_sales") {
            Err(StagingError::Syntax(m)) => assert!(m.starts_with("no such column: usr_id"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn row_cap_truncates() {
        let (_d, s) = store(&[("sales.csv", "user_id,amount\nu1,3.5\nu2,4\nu3,5\n")]);
        let limits = ResourceLimits { max_rows: 2, ..Default::default() };
        let r = s.execute_with_limits("SELECT * FROM csv_sales ORDER BY user_id", &limits).unwrap();
        assert!(r.truncated);
        assert_eq!(r.rows.len(), 2);
    }

    #[test]
    fn runaway_queries_time_out() {
        let (_d, s) = store(&[("a.csv", "x\n1\n")]);
        let limits = ResourceLimits { timeout_ms: 50, ..Default::default() };
        let q = "WITH RECURSIVE c(n) AS (SELECT 1 UNION ALL SELECT n + 1 FROM c) SELECT COUNT(*) FROM c";
        assert!(matches!(s.execute_with_limits(q, &limits), Err(StagingError::Timeout(_))));
    }

    #[test]
    fn text_sources_become_documents() {
        let (_d, s) = store(&[("notes.txt", "First paragraph here.\n\nSecond one.\n")]);
        let r = s.execute_query("SELECT source_id, chunk_index FROM text_documents ORDER BY chunk_index").unwrap();
        assert_eq!(r.rows.len(), 2);
        let alias: Alias = "txt.notes.key_terms".parse().unwrap();
        assert_eq!(s.locate(&alias), Some(("text_documents", "key_terms")));
    }

    #[test]
    fn cross_source_join_matches_nested_loop() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("sales.csv"), "user_id,amount\nu1,1\nu2,2\nu3,3\nu5,5\n").unwrap();
        let conn = Connection::open(dir.path().join("users.db")).unwrap();
        conn.execute_batch("CREATE TABLE users(customer_id TEXT, name TEXT); INSERT INTO users VALUES ('u1','a'),('u2','b'),('u4','d');").unwrap();
        drop(conn);
        let d = discover_sources(dir.path()).unwrap();
        let g = build_metagraph(&d.sources, &IngestionConfig::default(), None).unwrap();
        let s = materialize(&d.sources, &g, &ResourceLimits::default()).unwrap();
        let r = s
            .execute_query("SELECT COUNT(*) FROM csv_sales JOIN sqlite_users_users ON csv_sales.user_id = sqlite_users_users.customer_id")
            .unwrap();
        let left = ["u1", "u2", "u3", "u5"];
        let right = ["u1", "u2", "u4"];
        let oracle = left.iter().flat_map(|l| right.iter().filter(move |r| *r == l)).count();
        assert_eq!(r.rows, vec![vec![Cell::Int(oracle as i64)]]);
    }

    #[test]
    fn every_catalog_column_is_staged() {
        let (_d, s) = store(&[
            ("sales.csv", "user_id,amount\nu1,3.5\n"),
            ("events.json", r#"{"periods":[{"name":"x","tags":["a","b"]}],"meta":1}"#),
            ("notes.txt", "Lead Rate = CTR * CVR\n"),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let _ = dir;
        let staged: usize = s.tables().iter().filter(|t| t.name != TEXT_DOCUMENTS).map(|t| t.columns.len()).sum();
        let catalog = s.column_map().keys().filter(|a| a.format != SourceFormat::Text).count();
        assert_eq!(staged, catalog);
    }

    #[test]
    fn persisted_copy_has_same_rows() {
        let (d, s) = store(&[("sales.csv", "user_id,amount\nu1,3.5\nu2,4\n")]);
        let path = d.path().join("staging.db");
        s.persist(&path).unwrap();
        let conn = Connection::open(&path).unwrap();
        let n: i64 = conn.query_row("SELECT COUNT(*) FROM csv_sales", [], |r| r.get(0)).unwrap();
        assert_eq!(n, 2);
    }
}
