//! Sub-question execution: query generation, the self-correction loop,
//! result summaries and chart output.

mod chart;
mod describe;
mod svg;

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use chart::{classify_columns, is_temporal_column, select_chart, ChartSpec, ChartType, ColumnClass};
pub use describe::{describe, pearson};
pub use svg::{render_chart, render_svg};

use crate::ingestion::UnifiedType;
use crate::prompt::PromptBuilder;
use crate::provider::{tags, CascadeSession, Provider, ProviderError, Tier};
use crate::staging::{Cell, QueryResult, StagingError, StagingStore};

pub const CODEGEN_SYSTEM_PROMPT: &str = "You write SQLite queries that answer analytical questions. Reply with exactly one read-only SELECT statement in a ```sql code block.";
pub const OBSERVE_SYSTEM_PROMPT: &str = "You report what a query result shows in one factual paragraph, citing the numbers given.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutorConfig {
    pub max_retries: usize,
    pub preview_rows: usize,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self { max_retries: 3, preview_rows: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AttemptOutcome {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeAttempt {
    /// 1-based.
    pub attempt_index: usize,
    pub program: String,
    pub outcome: AttemptOutcome,
    pub engine_message: String,
    pub duration_ms: u64,
    pub tier: Option<Tier>,
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub unified_type: UnifiedType,
    pub distinct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub column: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub columns: Vec<ColumnProfile>,
    pub row_count: usize,
    pub truncated: bool,
    pub rows_preview: Vec<Vec<Cell>>,
    /// One entry per numeric column that has at least one value.
    pub stats: Vec<ColumnStats>,
    pub narrative: String,
}

impl ResultSummary {
    pub fn empty() -> Self {
        Self { columns: Vec::new(), row_count: 0, truncated: false, rows_preview: Vec::new(), stats: Vec::new(), narrative: String::new() }
    }

    /// Profiles a query result, keeping at most `preview_cap` rows.
    pub fn from_result(result: &QueryResult, preview_cap: usize) -> Self {
        let mut columns = Vec::with_capacity(result.columns.len());
        let mut stats = Vec::new();
        for (i, col) in result.columns.iter().enumerate() {
            let distinct: BTreeSet<String> =
                result.rows.iter().filter(|r| !r[i].is_null()).map(|r| r[i].to_string()).collect();
            columns.push(ColumnProfile { name: col.name.clone(), unified_type: col.unified_type, distinct: distinct.len() });
            if col.unified_type.is_numeric() {
                let values: Vec<f64> = result.rows.iter().filter_map(|r| r[i].as_f64()).collect();
                if !values.is_empty() {
                    stats.push(ColumnStats {
                        column: col.name.clone(),
                        min: values.iter().copied().fold(f64::INFINITY, f64::min),
                        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        mean: values.iter().sum::<f64>() / values.len() as f64,
                    });
                }
            }
        }
        Self {
            columns,
            row_count: result.rows.len(),
            truncated: result.truncated,
            rows_preview: result.rows.iter().take(preview_cap).cloned().collect(),
            stats,
            narrative: String::new(),
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Pipe-separated header plus up to `max_rows` preview rows.
    pub fn preview_text(&self, max_rows: usize) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.columns.iter().map(|c| format!("{} {}", c.name, c.unified_type)).collect();
        out.push_str(&header.join(" | "));
        out.push('\n');
        for row in self.rows_preview.iter().take(max_rows) {
            let cells: Vec<String> = row.iter().map(|c| display_cell(c)).collect();
            out.push_str(&cells.join(" | "));
            out.push('\n');
        }
        if self.row_count > max_rows.min(self.rows_preview.len()) {
            out.push_str(&format!("... {} rows in total\n", self.row_count));
        }
        out
    }

    pub fn stats_text(&self) -> String {
        self.stats
            .iter()
            .map(|s| format!("{}: min {}, max {}, mean {}\n", s.column, fmt_num(s.min), fmt_num(s.max), fmt_num(s.mean)))
            .collect()
    }
}

/// Number rendering used in narratives and charts: up to 4 decimals,
/// trailing zeros trimmed.
pub fn fmt_num(x: f64) -> String {
    crate::util::format_decimal(x, 4)
}

pub fn display_cell(c: &Cell) -> String {
    match c {
        Cell::Float(f) => fmt_num(*f),
        other => other.to_string(),
    }
}

/// Everything the code generator is shown besides the question itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionContext {
    pub schema: String,
    pub hints: String,
    pub alias_mapping: String,
}

impl ExecutionContext {
    pub fn new(store: &StagingStore, hints: &crate::linkage::JoinHint) -> Self {
        Self { schema: store.schema_text(), hints: hints.rendered.clone(), alias_mapping: store.alias_mapping_text() }
    }
}

/// Pulls the query out of a model response: the first fenced block if any,
/// else the whole text; a trailing semicolon is dropped.
pub fn extract_sql(response: &str) -> String {
    let body = match response.find("```") {
        Some(start) => {
            let after = &response[start + 3..];
            let after = after.find('\n').map_or(after, |nl| {
                let lang = after[..nl].trim();
                if lang.chars().all(|c| c.is_ascii_alphanumeric()) { &after[nl + 1..] } else { after }
            });
            after.find("```").map_or(after, |end| &after[..end])
        }
        None => response,
    };
    body.trim().trim_end_matches(';').trim().to_string()
}

pub struct Generated {
    pub program: String,
    pub tier: Tier,
    pub model: String,
}

/// Asks the provider for a query answering `question`. With `prior`, the
/// failed program and its engine message are fed back for correction.
pub fn generate_program(
    question: &str,
    subgoal: &str,
    ctx: &ExecutionContext,
    prior: Option<&CodeAttempt>,
    provider: &Provider,
    session: &CascadeSession,
) -> Result<Generated, ProviderError> {
    let mut prompt = PromptBuilder::new()
        .section("Sub-goal", subgoal)
        .section("Sub-question", question)
        .section("Staging schema", &ctx.schema)
        .section("Join hints", &ctx.hints)
        .section("Alias mapping", &ctx.alias_mapping);
    if let Some(prior) = prior {
        prompt = prompt.section("Previous attempt", &prior.program).section("Engine error", &prior.engine_message);
    }
    prompt = prompt.section(
        "Instructions",
        "Write one read-only SQLite SELECT query over the staging tables that answers the sub-question. \
         Join hints name columns by catalog alias; use the alias mapping to translate them to staging \
         table.column names. Order the rows deterministically. Reply with the query in a ```sql block.",
    );
    let request = provider.request(tags::CODEGEN, CODEGEN_SYSTEM_PROMPT, prompt.build());
    let done = provider.complete(&request, session)?;
    Ok(Generated { program: extract_sql(&done.text), tier: done.tier, model: done.model })
}

/// Outcome of one sub-question.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub attempts: Vec<CodeAttempt>,
    /// The successful result, if any attempt succeeded.
    pub result: Option<QueryResult>,
}

impl Execution {
    pub fn succeeded(&self) -> bool {
        self.result.is_some()
    }
}

/// Generates and runs queries until one succeeds or `max_retries + 1`
/// attempts have been made. Every failure is reported to the cascade.
pub fn run_with_selfcorrection(
    question: &str,
    subgoal: &str,
    store: &StagingStore,
    ctx: &ExecutionContext,
    provider: &Provider,
    session: &CascadeSession,
    config: &ExecutorConfig,
) -> Execution {
    let mut attempts: Vec<CodeAttempt> = Vec::new();
    for index in 1..=config.max_retries + 1 {
        let started = Instant::now();
        let generated = generate_program(question, subgoal, ctx, attempts.last(), provider, session);
        let (program, tier, model, outcome) = match generated {
            Err(e) => (String::new(), None, None, Err(format!("provider error: {e}"))),
            Ok(g) => {
                let run = store.validate(&g.program).and_then(|_| store.execute_query(&g.program));
                (g.program, Some(g.tier), Some(g.model), run.map_err(|e: StagingError| e.engine_message()))
            }
        };
        let duration_ms = started.elapsed().as_millis() as u64;
        match outcome {
            Ok(result) => {
                session.record_success(tags::CODEGEN);
                attempts.push(CodeAttempt {
                    attempt_index: index,
                    program,
                    outcome: AttemptOutcome::Ok,
                    engine_message: String::new(),
                    duration_ms,
                    tier,
                    model,
                });
                return Execution { attempts, result: Some(result) };
            }
            Err(message) => {
                session.record_failure(tags::CODEGEN, provider.policy());
                tracing::info!(attempt = index, %message, "query attempt failed");
                attempts.push(CodeAttempt {
                    attempt_index: index,
                    program,
                    outcome: AttemptOutcome::Error,
                    engine_message: message,
                    duration_ms,
                    tier,
                    model,
                });
            }
        }
    }
    Execution { attempts, result: None }
}

/// Writes the observation paragraph for a summary: the provider's answer
/// when available, else the templated facts.
pub fn narrate(
    question: &str,
    summary: &ResultSummary,
    rows: &[Vec<Cell>],
    chart: &ChartSpec,
    provider: Option<(&Provider, &CascadeSession)>,
) -> String {
    let facts = describe(summary, rows, chart, question);
    let Some((provider, session)) = provider else {
        return facts;
    };
    let prompt = PromptBuilder::new()
        .section("Sub-question", question)
        .section("Result", summary.preview_text(20))
        .section("Statistics", if summary.stats.is_empty() { "none".to_string() } else { summary.stats_text() })
        .section("Chart", format!("{:?}", chart.chart_type).to_uppercase())
        .section("Observed facts", &facts)
        .section("Instructions", "Write one paragraph describing what the result shows. Lead with the fact that answers the question.");
    let request = provider.request(tags::OBSERVE, OBSERVE_SYSTEM_PROMPT, prompt.build());
    match provider.complete(&request, session) {
        Ok(done) if !done.text.trim().is_empty() => {
            session.record_success(tags::OBSERVE);
            done.text.split_whitespace().collect::<Vec<_>>().join(" ")
        }
        Ok(_) => {
            session.record_failure(tags::OBSERVE, provider.policy());
            facts
        }
        Err(e) => {
            tracing::warn!(error = %e, "observation fell back to template");
            facts
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::{discover_sources, IngestionConfig};
    use crate::metagraph::build_metagraph;
    use crate::provider::{CascadePolicy, ProviderSettings, RetryPolicy, ScriptedBackend};
    use crate::staging::{materialize, ResourceLimits};
    use std::sync::Arc;

    fn fixture() -> (tempfile::TempDir, StagingStore) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("sales.csv"), "user_id,amount\nu1,3.5\nu2,4\nu3,1\n").unwrap();
        let d = discover_sources(dir.path()).unwrap();
        let g = build_metagraph(&d.sources, &IngestionConfig::default(), None).unwrap();
        let s = materialize(&d.sources, &g, &ResourceLimits::default()).unwrap();
        (dir, s)
    }

    fn ctx(store: &StagingStore) -> ExecutionContext {
        ExecutionContext { schema: store.schema_text(), hints: "No cross-source joins discovered.".into(), alias_mapping: store.alias_mapping_text() }
    }

    fn provider(backend: Arc<ScriptedBackend>) -> Provider {
        let settings = ProviderSettings { retry: RetryPolicy { max_attempts: 1, base_backoff_ms: 0 }, ..Default::default() };
        Provider::new(backend, CascadePolicy::default(), settings)
    }

    #[test]
    fn sql_is_extracted_from_fences() {
        assert_eq!(extract_sql("```sql\nSELECT 1;\n```"), "SELECT 1");
        assert_eq!(extract_sql("Here:\n```\nSELECT 2\n```\nthanks"), "SELECT 2");
        assert_eq!(extract_sql(" SELECT 3 ; "), "SELECT 3");
    }

    #[test]
    fn happy_path_has_one_attempt() {
        let (_d, store) = fixture();
        let backend = Arc::new(ScriptedBackend::new());
        backend.push(tags::CODEGEN, "```sql\nSELECT COUNT(*) AS n FROM csv_sales\n```");
        let exec = run_with_selfcorrection("How many sales?", "volume", &store, &ctx(&store), &provider(backend), &CascadeSession::new(), &ExecutorConfig::default());
        assert_eq!(exec.attempts.len(), 1);
        assert_eq!(exec.result.unwrap().rows, vec![vec![Cell::Int(3)]]);
    }

    #[test]
    fn engine_error_is_fed_back_and_escalates() {
        let (_d, store) = fixture();
        let backend = Arc::new(ScriptedBackend::new());
        backend.push(tags::CODEGEN, "SELECT usr_id FROM csv_sales");
        backend.push(tags::CODEGEN, "DELETE FROM csv_sales");
        backend.push(tags::CODEGEN, "SELECT user_id FROM csv_sales ORDER BY user_id");
        let session = CascadeSession::new();
        let exec = run_with_selfcorrection("Who bought?", "buyers", &store, &ctx(&store), &provider(backend.clone()), &session, &ExecutorConfig::default());
        assert_eq!(exec.attempts.len(), 3);
        assert_eq!(exec.attempts[2].outcome, AttemptOutcome::Ok);
        assert_eq!(exec.attempts[2].tier, Some(Tier::Strong));
        assert_eq!(exec.attempts[0].tier, Some(Tier::Cheap));
        let second_prompt = &backend.prompts()[1];
        assert!(second_prompt.contains("## Previous attempt\nSELECT usr_id FROM csv_sales"));
        assert!(second_prompt.contains("## Engine error\nno such column: usr_id"));
    }

    #[test]
    fn exhaustion_keeps_the_full_trail() {
        let (_d, store) = fixture();
        let backend = Arc::new(ScriptedBackend::new());
        for _ in 0..4 {
            backend.push(tags::CODEGEN, "SELECT nope FROM csv_sales");
        }
        let config = ExecutorConfig { max_retries: 3, ..Default::default() };
        let exec = run_with_selfcorrection("q", "g", &store, &ctx(&store), &provider(backend), &CascadeSession::new(), &config);
        assert!(!exec.succeeded());
        assert_eq!(exec.attempts.len(), 4);
        assert!(exec.attempts.iter().all(|a| a.attempt_index <= config.max_retries + 1));
    }

    #[test]
    fn summaries_profile_numeric_columns() {
        let (_d, store) = fixture();
        let r = store.execute_query("SELECT user_id, amount FROM csv_sales ORDER BY user_id").unwrap();
        let s = ResultSummary::from_result(&r, 2);
        assert_eq!(s.row_count, 3);
        assert_eq!(s.rows_preview.len(), 2);
        assert_eq!(s.stats.len(), 1);
        assert_eq!((s.stats[0].min, s.stats[0].max), (1.0, 4.0));
        assert!((s.stats[0].mean - 8.5 / 3.0).abs() < 1e-12);
        assert_eq!(s.columns[0].distinct, 3);
    }
}
