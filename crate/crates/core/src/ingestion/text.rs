//! Pseudo-schema extraction for plain-text sources.

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::Deserialize;
use std::sync::OnceLock;

use crate::prompt::{extract_json, PromptBuilder};
use crate::provider::{tags, CascadeSession, Provider};
use crate::util::Diagnostic;

pub const SUMMARY_SENTENCES: usize = 3;
pub const TOP_TERMS: usize = 10;
const PROMPT_CHAR_CAP: usize = 20_000;

pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "before",
    "being", "below", "between", "both", "but", "by", "can", "could", "did", "do", "does", "each", "for", "from",
    "had", "has", "have", "he", "her", "here", "his", "how", "i", "if", "in", "into", "is", "it", "its", "may",
    "more", "most", "no", "not", "of", "on", "once", "only", "or", "other", "our", "out", "over", "per", "same",
    "she", "should", "so", "some", "such", "than", "that", "the", "their", "them", "then", "there", "these",
    "they", "this", "those", "through", "to", "too", "under", "until", "up", "very", "was", "we", "were", "what",
    "when", "where", "which", "while", "who", "why", "will", "with", "would", "you", "your",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Summary sentences and salient terms of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct TextSummary {
    pub summary: Vec<String>,
    pub key_terms: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Splits on sentence punctuation followed by whitespace and on line breaks.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut current = String::new();
        let mut chars = line.chars().peekable();
        while let Some(c) = chars.next() {
            current.push(c);
            if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
                let s = current.trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                current.clear();
            }
        }
        let s = current.trim();
        if !s.is_empty() {
            out.push(s.to_string());
        }
    }
    out
}

/// Blank-line separated paragraphs.
pub fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line.trim_end());
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    out
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z][A-Za-z0-9_]*").unwrap())
}

fn definition_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*]\s+)?([A-Za-z][A-Za-z0-9_ ]*?)\s*:?=\s*(.+)$").unwrap())
}

fn normalize_phrase(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Terms introduced by `Name = expression` definitions: the defined name and
/// the identifiers it is defined from.
pub fn definition_terms(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |t: String| {
        if !t.is_empty() && !is_stopword(&t) && !out.contains(&t) {
            out.push(t);
        }
    };
    for line in text.lines() {
        if let Some(caps) = definition_regex().captures(line) {
            push(normalize_phrase(&caps[1]));
            for tok in token_regex().find_iter(&caps[2]) {
                push(tok.as_str().to_lowercase());
            }
        }
    }
    out
}

/// The `n` most frequent non-stopword tokens, ties broken alphabetically.
pub fn top_terms(text: &str, n: usize) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for tok in token_regex().find_iter(text) {
        let t = tok.as_str().to_lowercase();
        if t.len() >= 2 && !is_stopword(&t) {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(n).map(|(t, _)| t).collect()
}

/// Offline summarizer: the first three sentences, plus defined terms and the
/// ten most frequent non-stopword terms.
pub fn extractive_summary(text: &str) -> (Vec<String>, Vec<String>) {
    let summary = split_sentences(text).into_iter().take(SUMMARY_SENTENCES).collect();
    let mut terms = definition_terms(text);
    for t in top_terms(text, TOP_TERMS) {
        if !terms.contains(&t) {
            terms.push(t);
        }
    }
    (summary, terms)
}

pub const SUMMARY_SYSTEM_PROMPT: &str = "You summarize plain-text documents for a data catalog so that their content can be matched against table columns.";

pub fn summary_prompt(source_id: &str, text: &str) -> String {
    let body: String = text.chars().take(PROMPT_CHAR_CAP).collect();
    PromptBuilder::new()
        .section("Source", source_id)
        .section("Document", body)
        .section(
            "Instructions",
            "Return a JSON object {\"summary\": [...], \"key_terms\": [...]}. `summary` holds at most 3 sentences. \
             `key_terms` lists the metrics, entities and identifiers the document defines or mentions, \
             lowercase, plus closely related domain terms needed to interpret them.",
        )
        .build()
}

#[derive(Deserialize)]
struct SummaryResponse {
    #[serde(default)]
    summary: SentenceList,
    #[serde(default)]
    key_terms: Vec<String>,
}

#[derive(Deserialize, Default)]
#[serde(untagged)]
enum SentenceList {
    One(String),
    Many(Vec<String>),
    #[default]
    None,
}

fn parse_summary_response(text: &str) -> Option<(Vec<String>, Vec<String>)> {
    let parsed: SummaryResponse = extract_json(text)?;
    let summary = match parsed.summary {
        SentenceList::One(s) => split_sentences(&s),
        SentenceList::Many(v) => v.into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        SentenceList::None => Vec::new(),
    };
    let mut seen = BTreeSet::new();
    let terms = parsed
        .key_terms
        .into_iter()
        .map(|t| normalize_phrase(&t))
        .filter(|t| !t.is_empty() && seen.insert(t.clone()))
        .collect();
    Some((summary, terms))
}

/// Summarizes a document through the provider, falling back to
/// [`extractive_summary`] when no provider is given or it fails.
pub fn summarize_document(
    source_id: &str,
    text: &str,
    llm: Option<(&Provider, &CascadeSession)>,
) -> TextSummary {
    let mut diagnostics = Vec::new();
    if text.trim().is_empty() {
        diagnostics.push(Diagnostic::warning(source_id, "text source is empty; pseudo-schema has no samples"));
        return TextSummary { summary: Vec::new(), key_terms: Vec::new(), diagnostics };
    }
    if let Some((provider, session)) = llm {
        let request = provider.request(tags::SUMMARY, SUMMARY_SYSTEM_PROMPT, summary_prompt(source_id, text));
        match provider.complete(&request, session) {
            Ok(done) => match parse_summary_response(&done.text) {
                Some((summary, key_terms)) if !summary.is_empty() => {
                    session.record_success(tags::SUMMARY);
                    return TextSummary { summary, key_terms, diagnostics };
                }
                _ => {
                    session.record_failure(tags::SUMMARY, provider.policy());
                    diagnostics.push(Diagnostic::warning(
                        source_id,
                        "provider summary was not a valid JSON summary; used extractive fallback",
                    ));
                }
            },
            Err(e) => diagnostics.push(Diagnostic::warning(
                source_id,
                format!("provider summary failed ({e}); used extractive fallback"),
            )),
        }
    }
    let (summary, key_terms) = extractive_summary(text);
    TextSummary { summary, key_terms, diagnostics }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{CascadePolicy, ProviderError, ProviderSettings, ScriptedBackend};
    use std::sync::Arc;

    #[test]
    fn stopwords_are_sorted_for_binary_search() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn definitions_yield_key_terms() {
        let (_, terms) = extractive_summary("Lead Rate = CTR * CVR\nCTR is clicks over impressions.");
        for t in ["lead rate", "ctr", "cvr"] {
            assert!(terms.contains(&t.to_string()), "{t} missing from {terms:?}");
        }
    }

    #[test]
    fn first_three_sentences() {
        let (summary, _) = extractive_summary("One. Two! Three? Four.\nFive");
        assert_eq!(summary, vec!["One.", "Two!", "Three?"]);
        assert_eq!(split_sentences("v1.2 is out. ok"), vec!["v1.2 is out.", "ok"]);
    }

    #[test]
    fn top_terms_rank_by_frequency_then_alphabet() {
        assert_eq!(top_terms("beta alpha beta gamma alpha beta the the the", 2), vec!["beta", "alpha"]);
    }

    #[test]
    fn empty_text_has_no_samples() {
        let s = summarize_document("notes", "   \n", None);
        assert!(s.summary.is_empty() && s.key_terms.is_empty());
        assert_eq!(s.diagnostics.len(), 1);
    }

    #[test]
    fn provider_failure_falls_back() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_error(tags::SUMMARY, ProviderError::Api { status: 400, message: "bad".into() });
        let provider = Provider::new(backend, CascadePolicy::default(), ProviderSettings::default());
        let session = CascadeSession::new();
        let s = summarize_document("notes", "Lead Rate = CTR * CVR", Some((&provider, &session)));
        assert!(s.key_terms.contains(&"lead rate".to_string()));
        assert_eq!(s.diagnostics.len(), 1);
    }

    #[test]
    fn provider_summary_is_used() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push(tags::SUMMARY, r#"{"summary": ["Defines lead rate."], "key_terms": ["Lead Rate", "CTR"]}"#);
        let provider = Provider::new(backend, CascadePolicy::default(), ProviderSettings::default());
        let session = CascadeSession::new();
        let s = summarize_document("notes", "Lead Rate = CTR * CVR", Some((&provider, &session)));
        assert_eq!(s.summary, vec!["Defines lead rate."]);
        assert_eq!(s.key_terms, vec!["lead rate", "ctr"]);
        assert!(s.diagnostics.is_empty());
    }
}
