//! Flattening of JSON documents into relational collections.
//!
//! * nested objects become dot-path columns (`a.b`);
//! * arrays of objects become a child collection `parent[]path` with an
//!   implicit `parent_index` column pointing at the parent row;
//! * arrays of scalars explode into one row per element.

use std::collections::HashMap;

use serde_json::{Map, Value};

pub const PARENT_INDEX: &str = "parent_index";
pub const SCALAR_COLUMN: &str = "value";

/// One flattened table of a JSON document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collection {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

#[derive(Debug, thiserror::Error)]
pub enum FlattenError {
    #[error("top-level JSON value must be an array of objects or an object of named arrays, found {0}")]
    NotACollection(&'static str),
}

/// Whether the document's root collection is the document itself (array form).
pub fn is_array_form(doc: &Value) -> bool {
    doc.is_array()
}

/// Flattens a whole document. Returns the collections plus the names of
/// top-level keys that were skipped because they do not hold arrays.
pub fn flatten_document(doc: &Value, source_id: &str) -> Result<(Vec<Collection>, Vec<String>), FlattenError> {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    match doc {
        Value::Array(items) => {
            let indexed: Vec<(Option<usize>, &Value)> = items.iter().map(|v| (None, v)).collect();
            flatten_collection(source_id, &indexed, &mut out);
        }
        Value::Object(map) => {
            for (key, value) in map {
                match value {
                    Value::Array(items) => {
                        let indexed: Vec<(Option<usize>, &Value)> = items.iter().map(|v| (None, v)).collect();
                        flatten_collection(key, &indexed, &mut out);
                    }
                    _ => skipped.push(key.clone()),
                }
            }
        }
        other => return Err(FlattenError::NotACollection(kind(other))),
    }
    Ok((out, skipped))
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

pub fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

#[derive(Default)]
struct Builder {
    columns: Vec<String>,
    index: HashMap<String, usize>,
    rows: Vec<Vec<(usize, Option<String>)>>,
}

impl Builder {
    fn column(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.columns.len();
        self.columns.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }
}

#[derive(Default)]
struct ObjectParts {
    fields: Vec<(String, Option<String>)>,
    exploded: Vec<(String, Vec<Option<String>>)>,
    children: Vec<(String, Vec<Value>)>,
}

fn collect_object(obj: &Map<String, Value>, prefix: &str, parts: &mut ObjectParts) {
    for (key, value) in obj {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match value {
            Value::Object(inner) => collect_object(inner, &path, parts),
            Value::Array(items) if !items.is_empty() && items.iter().all(Value::is_object) => {
                parts.children.push((path, items.clone()));
            }
            Value::Array(items) => {
                let values: Vec<Option<String>> =
                    if items.is_empty() { vec![None] } else { items.iter().map(scalar_text).collect() };
                parts.exploded.push((path, values));
            }
            scalar => parts.fields.push((path, scalar_text(scalar))),
        }
    }
}

fn flatten_collection(name: &str, items: &[(Option<usize>, &Value)], out: &mut Vec<Collection>) {
    let mut builder = Builder::default();
    let has_parent = items.iter().any(|(p, _)| p.is_some());
    if has_parent {
        builder.column(PARENT_INDEX);
    }
    // child path -> (parent row index, item)
    let mut child_order: Vec<String> = Vec::new();
    let mut child_items: HashMap<String, Vec<(Option<usize>, Value)>> = HashMap::new();

    for (row_index, (parent, item)) in items.iter().enumerate() {
        let mut base: Vec<(usize, Option<String>)> = Vec::new();
        if let Some(p) = parent {
            base.push((builder.column(PARENT_INDEX), Some(p.to_string())));
        }
        let mut parts = ObjectParts::default();
        match item {
            Value::Object(obj) => collect_object(obj, "", &mut parts),
            Value::Array(inner) => {
                let values = if inner.is_empty() { vec![None] } else { inner.iter().map(scalar_text).collect() };
                parts.exploded.push((SCALAR_COLUMN.to_string(), values));
            }
            scalar => parts.fields.push((SCALAR_COLUMN.to_string(), scalar_text(scalar))),
        }
        for (path, value) in parts.fields {
            base.push((builder.column(&path), value));
        }
        let mut rows = vec![base];
        for (path, values) in parts.exploded {
            let col = builder.column(&path);
            let mut next = Vec::with_capacity(rows.len() * values.len());
            for row in &rows {
                for v in &values {
                    let mut r = row.clone();
                    r.push((col, v.clone()));
                    next.push(r);
                }
            }
            rows = next;
        }
        builder.rows.extend(rows);
        for (path, children) in parts.children {
            if !child_items.contains_key(&path) {
                child_order.push(path.clone());
            }
            let entry = child_items.entry(path).or_default();
            entry.extend(children.into_iter().map(|c| (Some(row_index), c)));
        }
    }

    let width = builder.columns.len();
    let rows = builder
        .rows
        .into_iter()
        .map(|cells| {
            let mut row = vec![None; width];
            for (i, v) in cells {
                row[i] = v;
            }
            row
        })
        .collect();
    out.push(Collection { name: name.to_string(), columns: builder.columns, rows });

    for path in child_order {
        let children = &child_items[&path];
        let refs: Vec<(Option<usize>, &Value)> = children.iter().map(|(p, v)| (*p, v)).collect();
        flatten_collection(&format!("{name}[]{path}"), &refs, out);
    }
}
