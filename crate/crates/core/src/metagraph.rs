//! The unified column catalog.
//!
//! Every column of every source becomes one [`ColumnMeta`] addressed by an
//! [`Alias`] of the form `format.source[.table].column`. CSV and text sources
//! hold a single logical table and omit the table segment; SQLite sources
//! always carry it, as do JSON documents shaped as an object of named arrays.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::ingestion::{
    extract_columns, DocumentDigest, IngestionConfig, IngestionError, SampleSet, SourceDescriptor, SourceFormat,
    UnifiedType,
};
use crate::provider::{CascadeSession, Provider};
use crate::util::Diagnostic;

const ESCAPED_DOT: &str = "\\u002e";
const ESCAPED_BACKSLASH: &str = "\\u005c";

fn escape_segment(raw: &str) -> String {
    raw.replace('\\', ESCAPED_BACKSLASH).replace('.', ESCAPED_DOT)
}

fn unescape_segment(seg: &str) -> Result<String, AliasParseError> {
    let mut out = String::with_capacity(seg.len());
    let mut rest = seg;
    while let Some(pos) = rest.find('\\') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if tail.starts_with(ESCAPED_DOT) {
            out.push('.');
            rest = &tail[ESCAPED_DOT.len()..];
        } else if tail.starts_with(ESCAPED_BACKSLASH) {
            out.push('\\');
            rest = &tail[ESCAPED_BACKSLASH.len()..];
        } else {
            return Err(AliasParseError(format!("bad escape in segment '{seg}'")));
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid alias: {0}")]
pub struct AliasParseError(String);

/// Globally unique column address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Alias {
    pub format: SourceFormat,
    pub source: String,
    pub table: Option<String>,
    pub column: String,
}

impl Alias {
    pub fn new(format: SourceFormat, source: &str, table: Option<&str>, column: &str) -> Self {
        Self {
            format,
            source: source.to_string(),
            table: table.map(str::to_string),
            column: column.to_string(),
        }
    }

    /// The alias without its column segment, e.g. `sqlite.users.users`.
    pub fn table_prefix(&self) -> String {
        let mut s = format!("{}.{}", self.format.alias_segment(), escape_segment(&self.source));
        if let Some(t) = &self.table {
            s.push('.');
            s.push_str(&escape_segment(t));
        }
        s
    }
}

impl fmt::Display for Alias {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table_prefix(), escape_segment(&self.column))
    }
}

impl FromStr for Alias {
    type Err = AliasParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('.').collect();
        let format = parts
            .first()
            .and_then(|f| SourceFormat::from_alias_segment(f))
            .ok_or_else(|| AliasParseError(format!("'{s}' has no known format segment")))?;
        let (source, table, column) = match parts.len() {
            3 => (parts[1], None, parts[2]),
            4 => (parts[1], Some(parts[2]), parts[3]),
            n => return Err(AliasParseError(format!("'{s}' has {n} segments, expected 3 or 4"))),
        };
        Ok(Alias {
            format,
            source: unescape_segment(source)?,
            table: table.map(unescape_segment).transpose()?,
            column: unescape_segment(column)?,
        })
    }
}

impl Serialize for Alias {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Alias {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where a column came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRef {
    pub source_id: String,
    pub format: SourceFormat,
    pub path: PathBuf,
}

impl From<&SourceDescriptor> for SourceRef {
    fn from(d: &SourceDescriptor) -> Self {
        Self { source_id: d.source_id.clone(), format: d.format, path: d.path.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    /// A physical column of a structured source.
    Data,
    /// A summary or key-terms column synthesized from a text source.
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub alias: Alias,
    pub unified_type: UnifiedType,
    pub samples: SampleSet,
    pub origin: SourceRef,
    pub role: ColumnRole,
}

impl ColumnMeta {
    pub fn name(&self) -> &str {
        &self.alias.column
    }

    pub fn is_pseudo(&self) -> bool {
        self.role == ColumnRole::Pseudo
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetaGraphError {
    #[error("no sources to build a metagraph from")]
    NoSources,
    #[error("source {source_id}: {error}")]
    Source { source_id: String, error: IngestionError },
    #[error("internal invariant breach: alias {0} assigned twice")]
    DuplicateAlias(String),
    #[error("cannot fingerprint {path}: {error}")]
    Fingerprint { path: PathBuf, error: std::io::Error },
}

/// Every column of the workspace, sorted by alias. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaGraph {
    columns: Vec<ColumnMeta>,
    /// Ordered summaries of text sources, keyed by source id.
    documents: BTreeMap<String, DocumentDigest>,
    built_at: String,
    workspace_fingerprint: String,
    diagnostics: Vec<Diagnostic>,
}

impl MetaGraph {
    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn get(&self, alias: &Alias) -> Option<&ColumnMeta> {
        self.columns.binary_search_by(|c| c.alias.cmp(alias)).ok().map(|i| &self.columns[i])
    }

    pub fn find(&self, alias: &str) -> Option<&ColumnMeta> {
        alias.parse::<Alias>().ok().and_then(|a| self.get(&a))
    }

    pub fn documents(&self) -> &BTreeMap<String, DocumentDigest> {
        &self.documents
    }

    pub fn built_at(&self) -> &str {
        &self.built_at
    }

    pub fn workspace_fingerprint(&self) -> &str {
        &self.workspace_fingerprint
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    /// Assembles a graph from already extracted columns, checking alias
    /// uniqueness and sorting by alias.
    pub fn from_columns(
        mut columns: Vec<ColumnMeta>,
        documents: BTreeMap<String, DocumentDigest>,
        workspace_fingerprint: String,
        diagnostics: Vec<Diagnostic>,
    ) -> Result<Self, MetaGraphError> {
        columns.sort_by(|a, b| a.alias.cmp(&b.alias));
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(&c.alias) {
                return Err(MetaGraphError::DuplicateAlias(c.alias.to_string()));
            }
        }
        Ok(Self {
            columns,
            documents,
            built_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            workspace_fingerprint,
            diagnostics,
        })
    }

    pub fn to_json(&self) -> String {
        crate::util::to_canonical_json(self).expect("metagraph serializes")
    }
}

/// Digest over the names and bytes of all source files, in path order.
pub fn workspace_fingerprint(sources: &[SourceDescriptor]) -> Result<String, MetaGraphError> {
    let mut paths: Vec<&Path> = sources.iter().map(|s| s.path.as_path()).collect();
    paths.sort();
    let mut hasher = Sha256::new();
    for path in paths {
        let bytes = std::fs::read(path).map_err(|error| MetaGraphError::Fingerprint { path: path.into(), error })?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Extracts every source (concurrently) and unions the columns.
pub fn build_metagraph(
    sources: &[SourceDescriptor],
    config: &IngestionConfig,
    llm: Option<(&Provider, &CascadeSession)>,
) -> Result<MetaGraph, MetaGraphError> {
    if sources.is_empty() {
        return Err(MetaGraphError::NoSources);
    }
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = sources
            .iter()
            .map(|source| scope.spawn(move || (source, extract_columns(source, config, llm))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("extraction thread panicked")).collect()
    });

    let mut columns = Vec::new();
    let mut documents = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for (source, result) in results {
        let extraction =
            result.map_err(|error| MetaGraphError::Source { source_id: source.source_id.clone(), error })?;
        columns.extend(extraction.columns);
        diagnostics.extend(extraction.diagnostics);
        if let Some(doc) = extraction.document {
            documents.insert(source.source_id.clone(), doc);
        }
    }
    let fingerprint = workspace_fingerprint(sources)?;
    MetaGraph::from_columns(columns, documents, fingerprint, diagnostics)
}

/// One line per column: alias, type and up to `max_examples` sample values.
pub fn render_preview(graph: &MetaGraph, max_examples: usize) -> String {
    let mut out = String::new();
    for c in graph.columns() {
        out.push_str(&format!("{} [{}]", c.alias, c.unified_type));
        if max_examples > 0 && !c.samples.is_empty() {
            let examples: Vec<&str> = c.samples.values.iter().take(max_examples).map(String::as_str).collect();
            out.push_str(" e.g. ");
            out.push_str(&examples.join(", "));
        }
        out.push('\n');
    }
    out
}
