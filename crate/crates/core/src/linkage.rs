//! Join-key discovery.
//!
//! Every pair of same-typed columns is scored as
//! `w_n * name_similarity + w_v * value_similarity`; pairs scoring above
//! `theta` become edges of the [`EntityGraph`], and the best `k` edges are
//! rendered as join instructions by [`formulate_hints`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingestion::{SampleSet, UnifiedType};
use crate::metagraph::{Alias, ColumnMeta, MetaGraph};
use crate::util::Diagnostic;

pub const HINT_PREFIX: &str = "You must JOIN ON: ";
pub const NO_JOINS: &str = "No cross-source joins discovered.";
pub const CONTEXT_PREFIX: &str = "Context sources: ";

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NameMetric {
    Exact,
    Levenshtein,
    JaroWinkler,
}

impl FromStr for NameMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "EXACT" => Ok(NameMetric::Exact),
            "LEVENSHTEIN" => Ok(NameMetric::Levenshtein),
            "JARO_WINKLER" => Ok(NameMetric::JaroWinkler),
            _ => Err(format!("unknown name metric '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid similarity config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityConfig {
    pub w_n: f64,
    pub w_v: f64,
    pub theta: f64,
    pub k: usize,
    pub name_metric: NameMetric,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self { w_n: 0.6, w_v: 0.4, theta: 0.55, k: 5, name_metric: NameMetric::JaroWinkler }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, w) in [("w_n", self.w_n), ("w_v", self.w_v)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(ConfigError(format!("{name} = {w} is outside [0, 1]")));
            }
        }
        if (self.w_n + self.w_v - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(ConfigError(format!("w_n + w_v = {} but must equal 1", self.w_n + self.w_v)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ConfigError(format!("theta = {} is outside [0, 1]", self.theta)));
        }
        if self.k < 1 {
            return Err(ConfigError("k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn combine(&self, name: f64, value: f64) -> f64 {
        self.w_n * name + self.w_v * value
    }
}

/// Lowercases and drops everything but letters and digits, so `userId`,
/// `user_id` and `USER-ID` all become `userid`.
pub fn canonical_name(name: &str) -> String {
    name.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn jaro(a: &[char], b: &[char]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_matched = vec![false; a.len()];
    let mut b_matched = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_matched[j] && b[j] == *ca {
                a_matched[i] = true;
                b_matched[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let a_seq = a.iter().zip(&a_matched).filter(|(_, m)| **m).map(|(c, _)| c);
    let b_seq = b.iter().zip(&b_matched).filter(|(_, m)| **m).map(|(c, _)| c);
    let transpositions = a_seq.zip(b_seq).filter(|(x, y)| x != y).count() / 2;
    let m = matches as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - transpositions as f64) / m) / 3.0
}

fn jaro_winkler(a: &[char], b: &[char]) -> f64 {
    let sim = jaro(a, b);
    if sim <= 0.7 {
        return sim;
    }
    let prefix = a.iter().zip(b).take(4).take_while(|(x, y)| x == y).count();
    sim + 0.1 * prefix as f64 * (1.0 - sim)
}

/// Lexical similarity of two column names after canonicalization.
/// Names that canonicalize to the empty string score 0.
pub fn name_similarity(a: &str, b: &str, metric: NameMetric) -> f64 {
    let (ca, cb) = (canonical_name(a), canonical_name(b));
    if ca.is_empty() || cb.is_empty() {
        return 0.0;
    }
    if ca == cb {
        return 1.0;
    }
    // Order the pair so asymmetric tie-breaking inside the matchers cannot
    // make the score depend on argument order.
    let (x, y) = if ca <= cb { (ca, cb) } else { (cb, ca) };
    let (x, y): (Vec<char>, Vec<char>) = (x.chars().collect(), y.chars().collect());
    match metric {
        NameMetric::Exact => 0.0,
        NameMetric::Levenshtein => 1.0 - levenshtein(&x, &y) as f64 / x.len().max(y.len()) as f64,
        NameMetric::JaroWinkler => jaro_winkler(&x, &y),
    }
}

/// Jaccard coefficient of two sample sets; 0 when both are empty.
pub fn value_similarity(a: &SampleSet, b: &SampleSet) -> f64 {
    let (small, large) = if a.values.len() <= b.values.len() { (a, b) } else { (b, a) };
    let inter = small.values.iter().filter(|v| large.values.contains(*v)).count();
    let union = a.values.len() + b.values.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEdge {
    pub a: Alias,
    pub b: Alias,
    pub weight: f64,
    pub name_component: f64,
    pub value_component: f64,
}

/// Scores one pair of columns, returning the canonical-order edge whether or
/// not it clears the threshold.
pub fn score_pair(x: &ColumnMeta, y: &ColumnMeta, config: &SimilarityConfig) -> LinkEdge {
    let (x, y) = if x.alias <= y.alias { (x, y) } else { (y, x) };
    let name_component = name_similarity(x.name(), y.name(), config.name_metric);
    let value_component = value_similarity(&x.samples, &y.samples);
    LinkEdge {
        a: x.alias.clone(),
        b: y.alias.clone(),
        weight: config.combine(name_component, value_component),
        name_component,
        value_component,
    }
}

/// Weighted undirected graph of probable join keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityGraph {
    pub config: SimilarityConfig,
    pub vertex_count: usize,
    /// Edges sorted by `(a, b)`.
    pub edges: Vec<LinkEdge>,
    /// Text pseudo-schema columns; never rendered as join keys.
    pub pseudo: BTreeSet<Alias>,
    pub diagnostics: Vec<Diagnostic>,
}

impl EntityGraph {
    pub fn edge(&self, a: &Alias, b: &Alias) -> Option<&LinkEdge> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.edges.iter().find(|e| &e.a == a && &e.b == b)
    }

    pub fn is_context_edge(&self, edge: &LinkEdge) -> bool {
        self.pseudo.contains(&edge.a) || self.pseudo.contains(&edge.b)
    }

    pub fn to_json(&self) -> String {
        crate::util::to_canonical_json(self).expect("entity graph serializes")
    }
}

fn bucket_pairs(columns: &[ColumnMeta]) -> Vec<(usize, usize)> {
    let mut buckets: BTreeMap<UnifiedType, Vec<usize>> = BTreeMap::new();
    for (i, c) in columns.iter().enumerate() {
        buckets.entry(c.unified_type).or_default().push(i);
    }
    let mut pairs = Vec::new();
    for members in buckets.values() {
        for (n, &i) in members.iter().enumerate() {
            for &j in &members[n + 1..] {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Scores all type-compatible column pairs of `graph` and keeps those whose
/// combined similarity exceeds `config.theta`.
pub fn build_entity_graph(graph: &MetaGraph, config: &SimilarityConfig) -> Result<EntityGraph, ConfigError> {
    config.validate()?;
    let columns = graph.columns();
    let mut diagnostics = Vec::new();
    for c in columns {
        if canonical_name(c.name()).is_empty() {
            diagnostics.push(Diagnostic::warning(c.alias.to_string(), "column name has no letters or digits; name similarity is 0"));
        }
        if c.samples.is_empty() {
            diagnostics.push(Diagnostic::info(c.alias.to_string(), "no sampled values; value similarity is 0"));
        }
    }

    let pairs = bucket_pairs(columns);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let chunk = pairs.len().div_ceil(threads).max(256);
    let mut edges: Vec<LinkEdge> = std::thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&(i, j)| score_pair(&columns[i], &columns[j], config))
                        .filter(|e| e.weight > config.theta)
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("scoring thread panicked")).collect()
    });
    edges.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));

    let pseudo = columns.iter().filter(|c| c.is_pseudo()).map(|c| c.alias.clone()).collect();
    Ok(EntityGraph { config: config.clone(), vertex_count: columns.len(), edges, pseudo, diagnostics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintPair {
    pub a: Alias,
    pub b: Alias,
    pub weight: f64,
}

/// Ranked join instructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinHint {
    pub pairs: Vec<HintPair>,
    /// Best edges touching text pseudo-columns.
    pub context: Vec<HintPair>,
    pub rendered: String,
}

impl JoinHint {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl fmt::Display for JoinHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.rendered)
    }
}

fn ranked<'a>(edges: impl Iterator<Item = &'a LinkEdge>, k: usize) -> Vec<HintPair> {
    let mut list: Vec<&LinkEdge> = edges.collect();
    list.sort_by(|x, y| y.weight.total_cmp(&x.weight).then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b))));
    list.into_iter().take(k).map(|e| HintPair { a: e.a.clone(), b: e.b.clone(), weight: e.weight }).collect()
}

/// Takes the `k` heaviest join edges (ties broken by alias order) and renders
/// one `You must JOIN ON: a = b` line per pair.
pub fn formulate_hints(entity: &EntityGraph, k: usize) -> JoinHint {
    let pairs = ranked(entity.edges.iter().filter(|e| !entity.is_context_edge(e)), k);
    let context = ranked(entity.edges.iter().filter(|e| entity.is_context_edge(e)), k);
    let mut lines: Vec<String> = pairs.iter().map(|p| format!("{HINT_PREFIX}{} = {}", p.a, p.b)).collect();
    if lines.is_empty() {
        lines.push(NO_JOINS.to_string());
    }
    if !context.is_empty() {
        let items: Vec<String> = context.iter().map(|p| format!("{} ~ {}", p.a, p.b)).collect();
        lines.push(format!("{CONTEXT_PREFIX}{}", items.join("; ")));
    }
    JoinHint { pairs, context, rendered: lines.join("\n") }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::SourceFormat;
    use crate::metagraph::{ColumnRole, SourceRef};
    use proptest::prelude::*;

    fn set(values: &[&str]) -> SampleSet {
        SampleSet {
            values: values.iter().map(|s| s.to_string()).collect(),
            sampled_from: values.len(),
            cap: 1000,
        }
    }

    fn column(alias: &str, ty: UnifiedType, values: &[&str]) -> ColumnMeta {
        let alias: Alias = alias.parse().unwrap();
        ColumnMeta {
            origin: SourceRef { source_id: alias.source.clone(), format: alias.format, path: "x".into() },
            role: if alias.format == SourceFormat::Text { ColumnRole::Pseudo } else { ColumnRole::Data },
            alias,
            unified_type: ty,
            samples: set(values),
        }
    }

    fn graph(columns: Vec<ColumnMeta>) -> MetaGraph {
        MetaGraph::from_columns(columns, BTreeMap::new(), String::new(), Vec::new()).unwrap()
    }

    #[test]
    fn exact_and_canonicalization() {
        assert_eq!(name_similarity("user_id", "user_id", NameMetric::Exact), 1.0);
        assert_eq!(name_similarity("userId", "user_id", NameMetric::Exact), 1.0);
        assert_eq!(name_similarity("user_id", "customer_id", NameMetric::Exact), 0.0);
        assert_eq!(name_similarity("__", "user_id", NameMetric::JaroWinkler), 0.0);
    }

    #[test]
    fn levenshtein_on_canonical_names() {
        // "userid" -> "customerid": delete c, t, o, m
        let s = name_similarity("user_id", "customer_id", NameMetric::Levenshtein);
        assert!((s - 0.6).abs() < 1e-12);
        assert_eq!(s, 1.0 - strsim::levenshtein("userid", "customerid") as f64 / 10.0);
    }

    #[test]
    fn jaro_winkler_matches_reference() {
        for (a, b) in [("martha", "marhta"), ("dixon", "dicksonx"), ("userid", "customerid"), ("region", "regionid")] {
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            let expected = strsim::jaro_winkler(x, y);
            assert!((name_similarity(a, b, NameMetric::JaroWinkler) - expected).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(value_similarity(&set(&["u1", "u2", "u3"]), &set(&["u2", "u3", "u4"])), 0.5);
        assert_eq!(value_similarity(&set(&["a"]), &set(&["a"])), 1.0);
        assert_eq!(value_similarity(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(value_similarity(&set(&[]), &set(&[])), 0.0);
    }

    #[test]
    fn combined_weight_example() {
        let cfg = SimilarityConfig::default();
        assert!((cfg.combine(1.0, 0.5) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(SimilarityConfig::default().validate().is_ok());
        assert!(SimilarityConfig { w_n: 0.7, ..Default::default() }.validate().is_err());
        assert!(SimilarityConfig { theta: 1.01, ..Default::default() }.validate().is_err());
        assert!(SimilarityConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(SimilarityConfig { w_n: 1.2, w_v: -0.2, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn single_column_has_no_edges() {
        let g = graph(vec![column("csv.a.x", UnifiedType::Text, &["1"])]);
        assert!(build_entity_graph(&g, &SimilarityConfig::default()).unwrap().edges.is_empty());
    }

    #[test]
    fn type_gate_blocks_mismatched_columns() {
        let g = graph(vec![
            column("csv.a.user_id", UnifiedType::Text, &["1", "2"]),
            column("csv.b.user_id", UnifiedType::Int, &["1", "2"]),
        ]);
        assert!(build_entity_graph(&g, &SimilarityConfig::default()).unwrap().edges.is_empty());
    }

    #[test]
    fn planted_pair_is_rendered_with_the_literal_prefix() {
        let g = graph(vec![
            column("csv.sales.user_id", UnifiedType::Text, &["u1", "u2", "u3", "u4"]),
            column("sqlite.users.users.customer_id", UnifiedType::Text, &["u1", "u2", "u3", "u9"]),
            column("csv.sales.amount", UnifiedType::Float, &["3.5", "4"]),
        ]);
        let e = build_entity_graph(&g, &SimilarityConfig::default()).unwrap();
        assert_eq!(e.edges.len(), 1);
        let hint = formulate_hints(&e, 5);
        assert_eq!(hint.rendered, "You must JOIN ON: csv.sales.user_id = sqlite.users.users.customer_id");
    }

    #[test]
    fn empty_graph_renders_explicit_notice() {
        let e = build_entity_graph(&graph(vec![]), &SimilarityConfig::default()).unwrap();
        assert_eq!(formulate_hints(&e, 5).rendered, NO_JOINS);
    }

    #[test]
    fn pseudo_columns_go_to_the_context_line() {
        let g = graph(vec![
            column("csv.sales.region", UnifiedType::Text, &["north", "south", "east"]),
            column("txt.notes.key_terms", UnifiedType::Text, &["north", "south", "east", "lead rate"]),
        ]);
        let e = build_entity_graph(&g, &SimilarityConfig { theta: 0.2, ..Default::default() }).unwrap();
        let hint = formulate_hints(&e, 5);
        assert!(hint.pairs.is_empty());
        assert_eq!(hint.rendered, format!("{NO_JOINS}\nContext sources: csv.sales.region ~ txt.notes.key_terms"));
    }

    #[test]
    fn top_k_is_sort_and_truncate() {
        let names = ["a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8"];
        let cols: Vec<_> = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let vals: Vec<String> = (0..=i).map(|v| v.to_string()).collect();
                let refs: Vec<&str> = vals.iter().map(String::as_str).collect();
                column(&format!("csv.s{i}.{n}"), UnifiedType::Int, &refs)
            })
            .collect();
        let cfg = SimilarityConfig { theta: 0.0, ..Default::default() };
        let e = build_entity_graph(&graph(cols), &cfg).unwrap();
        let mut oracle: Vec<&LinkEdge> = e.edges.iter().collect();
        oracle.sort_by(|x, y| y.weight.partial_cmp(&x.weight).unwrap().then((&x.a, &x.b).cmp(&(&y.a, &y.b))));
        let hint = formulate_hints(&e, 3);
        assert_eq!(hint.pairs.len(), 3);
        for (p, o) in hint.pairs.iter().zip(oracle) {
            assert_eq!((&p.a, &p.b), (&o.a, &o.b));
        }
        assert_eq!(hint.rendered.lines().count(), 3);
    }

    fn name_strategy() -> impl Strategy<Value = String> {
        "[a-zA-Z_]{0,12}"
    }

    fn set_strategy() -> impl Strategy<Value = BTreeSet<String>> {
        prop::collection::btree_set("[a-e]{1,2}", 0..12)
    }

    fn sample(values: BTreeSet<String>) -> SampleSet {
        SampleSet { sampled_from: values.len(), values, cap: 1000 }
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric_and_bounded(
            a in name_strategy(), b in name_strategy(),
            x in set_strategy(), y in set_strategy(),
        ) {
            for metric in [NameMetric::Exact, NameMetric::Levenshtein, NameMetric::JaroWinkler] {
                let s = name_similarity(&a, &b, metric);
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert_eq!(s, name_similarity(&b, &a, metric));
            }
            let (x, y) = (sample(x), sample(y));
            let v = value_similarity(&x, &y);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, value_similarity(&y, &x));
        }

        #[test]
        fn shared_value_never_lowers_jaccard(x in set_strategy(), y in set_strategy(), shared in "[a-z]{3}") {
            let before = value_similarity(&sample(x.clone()), &sample(y.clone()));
            let (mut x2, mut y2) = (x, y);
            x2.insert(shared.clone());
            y2.insert(shared);
            prop_assert!(value_similarity(&sample(x2), &sample(y2)) >= before);
        }
    }
}
