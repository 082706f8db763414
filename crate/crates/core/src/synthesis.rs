//! Typed insights, the final report, and insight-level scoring.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::executor::{ChartSpec, ChartType};
use crate::ingestion::text::is_stopword;
use crate::planner::{AnalysisPlan, NodeKind, NodeStatus};
use crate::prompt::{extract_json, PromptBuilder};
use crate::provider::{tags, CascadeSession, Provider, ProviderError};
use crate::util::{to_canonical_json, Diagnostic};

pub const SYNTHESIS_SYSTEM_PROMPT: &str =
    "You are a senior data analyst writing the final report of an analysis. You only state findings supported by the observations you are given.";
pub const JUDGE_SYSTEM_PROMPT: &str =
    "You grade how well a predicted insight matches a reference insight. Reply with a single number between 0 and 1.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InsightCategory {
    Trend,
    Comparison,
    Extreme,
    Attribution,
}

impl InsightCategory {
    pub const ALL: [InsightCategory; 4] = [Self::Trend, Self::Comparison, Self::Extreme, Self::Attribution];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Trend => "TREND",
            Self::Comparison => "COMPARISON",
            Self::Extreme => "EXTREME",
            Self::Attribution => "ATTRIBUTION",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::Trend => "Trend",
            Self::Comparison => "Comparison",
            Self::Extreme => "Extreme value",
            Self::Attribution => "Attribution",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_uppercase();
        Self::ALL.into_iter().find(|c| s == c.as_str() || (s == "EXTREME VALUE" && *c == Self::Extreme))
    }

    /// The category a chart of this type usually supports.
    pub fn for_chart(chart: ChartType) -> Self {
        match chart {
            ChartType::Line => Self::Trend,
            ChartType::Bar | ChartType::Heatmap => Self::Comparison,
            ChartType::Scatter => Self::Attribution,
            ChartType::Table => Self::Extreme,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Confidence {
    High,
    Medium,
    Low,
}

impl Confidence {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::High => "HIGH",
            Self::Medium => "MEDIUM",
            Self::Low => "LOW",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HIGH" => Some(Self::High),
            "MEDIUM" => Some(Self::Medium),
            "LOW" => Some(Self::Low),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    pub node_id: usize,
    pub chart: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight {
    pub id: String,
    pub category: InsightCategory,
    pub statement: String,
    pub evidence: Vec<Evidence>,
    pub confidence: Confidence,
}

/// One row of the appendix: where every sub-question's artifacts live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub node_id: usize,
    pub question: String,
    pub status: NodeStatus,
    pub chart: Option<String>,
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub goal: String,
    pub insights: Vec<Insight>,
    pub summary: String,
    pub recommendations: Vec<String>,
    /// Insight id to the evidence it rests on.
    pub trace_index: BTreeMap<String, Vec<Evidence>>,
    pub appendix: Vec<TraceEntry>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub max_insights: usize,
    pub max_recommendations: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self { max_insights: 12, max_recommendations: 5 }
    }
}

pub fn chart_path(node_id: usize) -> String {
    format!("charts/{node_id}.svg")
}

pub fn trace_path(node_id: usize) -> String {
    format!("trace/{node_id}.json")
}

/// Keyword categorization; `None` when no keyword matches.
pub fn keyword_category(statement: &str) -> Option<InsightCategory> {
    let s = statement.to_lowercase();
    let has = |words: &[&str]| words.iter().any(|w| s.contains(w));
    if has(&["because", "driven by", "correlated", "correlation"]) {
        return Some(InsightCategory::Attribution);
    }
    if has(&["trend", "increas", "decreas"]) {
        return Some(InsightCategory::Trend);
    }
    if has(&["versus", "compared"]) {
        return Some(InsightCategory::Comparison);
    }
    if has(&["highest", "lowest", "peak"]) {
        return Some(InsightCategory::Extreme);
    }
    None
}

/// Categorizes a statement by its first sentence, then the whole text, then
/// the chart it came with.
pub fn classify_statement(statement: &str, chart: Option<ChartType>) -> InsightCategory {
    let first = first_sentence(statement);
    keyword_category(&first)
        .or_else(|| keyword_category(statement))
        .unwrap_or_else(|| InsightCategory::for_chart(chart.unwrap_or(ChartType::Table)))
}

fn first_sentence(text: &str) -> String {
    crate::ingestion::text::split_sentences(text).into_iter().next().unwrap_or_default()
}

fn confidence_of(narrative: &str, row_count: usize) -> Confidence {
    let s = narrative.to_lowercase();
    if s.contains("weakly") || s.contains("without a sustained") || row_count < 3 {
        Confidence::Low
    } else if s.contains("strongly") || s.contains("stands out") || row_count >= 20 {
        Confidence::High
    } else {
        Confidence::Medium
    }
}

pub(crate) fn recommendation(category: InsightCategory, question: &str) -> String {
    match category {
        InsightCategory::Trend => format!("Keep monitoring the movement behind \"{question}\" and revisit targets if it continues."),
        InsightCategory::Comparison => {
            format!("Investigate what separates the strongest and weakest groups in \"{question}\".")
        }
        InsightCategory::Extreme => format!("Review the outlying case identified by \"{question}\" before it is averaged away."),
        InsightCategory::Attribution => {
            format!("Test the relationship found in \"{question}\" as a lever before committing budget to it.")
        }
    }
}

struct Finding<'a> {
    node_id: usize,
    question: &'a str,
    narrative: &'a str,
    row_count: usize,
    chart: Option<&'a ChartSpec>,
}

fn findings<'a>(plan: &'a AnalysisPlan, charts: &'a BTreeMap<usize, ChartSpec>) -> Vec<Finding<'a>> {
    plan.nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Subquestion && n.status == NodeStatus::Answered)
        .filter_map(|n| {
            let answer = n.answer.as_ref()?;
            Some(Finding {
                node_id: n.id,
                question: &n.text,
                narrative: &answer.narrative,
                row_count: answer.row_count,
                chart: charts.get(&n.id),
            })
        })
        .collect()
}

fn evidence_for(node_id: usize, charts: &BTreeMap<usize, ChartSpec>) -> Evidence {
    Evidence { node_id, chart: charts.contains_key(&node_id).then(|| chart_path(node_id)) }
}

/// Renders the findings handed to the synthesis prompt; the offline backend
/// reads the same layout back.
pub fn findings_text(plan: &AnalysisPlan, charts: &BTreeMap<usize, ChartSpec>) -> String {
    let mut out = String::new();
    for f in findings(plan, charts) {
        let chart = f.chart.map(|c| c.chart_type.as_str()).unwrap_or("TABLE");
        let _ = writeln!(out, "[node {}] ({chart}, {} rows) {}", f.node_id, f.row_count, f.question);
        let _ = writeln!(out, "Observation: {}", f.narrative);
    }
    out
}

/// Parses [`findings_text`] back into `(node_id, chart, rows, question, observation)`.
pub fn parse_findings(text: &str) -> Vec<(usize, ChartType, usize, String, String)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^\[node (\d+)\] \(([A-Z]+), (\d+) rows\) (.*)$").unwrap());
    let mut out: Vec<(usize, ChartType, usize, String, String)> = Vec::new();
    for line in text.lines() {
        if let Some(c) = re.captures(line) {
            let chart = match &c[2] {
                "LINE" => ChartType::Line,
                "BAR" => ChartType::Bar,
                "SCATTER" => ChartType::Scatter,
                "HEATMAP" => ChartType::Heatmap,
                _ => ChartType::Table,
            };
            out.push((c[1].parse().unwrap_or(0), chart, c[3].parse().unwrap_or(0), c[4].to_string(), String::new()));
        } else if let (Some(obs), Some(last)) = (line.strip_prefix("Observation: "), out.last_mut()) {
            last.4 = obs.to_string();
        }
    }
    out
}

#[derive(Deserialize)]
struct ProposedReport {
    #[serde(default)]
    summary: String,
    #[serde(default)]
    insights: Vec<ProposedInsight>,
    #[serde(default)]
    recommendations: Vec<String>,
}

#[derive(Deserialize)]
struct ProposedInsight {
    statement: String,
    #[serde(default)]
    category: String,
    #[serde(default)]
    evidence: Vec<usize>,
    #[serde(default)]
    confidence: String,
}

fn templated(plan: &AnalysisPlan, charts: &BTreeMap<usize, ChartSpec>, config: &SynthesisConfig) -> (Vec<Insight>, String, Vec<String>) {
    let found = findings(plan, charts);
    let mut insights = Vec::new();
    let mut recommendations = Vec::new();
    for f in found.iter().take(config.max_insights) {
        let category = classify_statement(f.narrative, f.chart.map(|c| c.chart_type));
        let statement = if f.narrative.trim().is_empty() { f.question.to_string() } else { f.narrative.trim().to_string() };
        insights.push(Insight {
            id: format!("I{}", insights.len() + 1),
            category,
            statement,
            evidence: vec![evidence_for(f.node_id, charts)],
            confidence: confidence_of(f.narrative, f.row_count),
        });
        if recommendations.len() < config.max_recommendations {
            recommendations.push(recommendation(category, f.question));
        }
    }
    let mut counts: BTreeMap<InsightCategory, usize> = BTreeMap::new();
    for i in &insights {
        *counts.entry(i.category).or_insert(0) += 1;
    }
    let answered = found.len();
    let asked = plan.subquestions().count();
    let mix: Vec<String> = counts.iter().map(|(c, n)| format!("{n} {}", c.title().to_lowercase())).collect();
    let mut summary = format!(
        "The analysis of \"{}\" answered {answered} of {asked} questions and produced {} findings ({}).",
        plan.goal,
        insights.len(),
        mix.join(", ")
    );
    if let Some(first) = insights.first() {
        let _ = write!(summary, " {}", first_sentence(&first.statement));
    }
    (insights, summary, recommendations)
}

fn failure_summary(plan: &AnalysisPlan) -> String {
    let count = |s: NodeStatus| plan.subquestions().filter(|n| n.status == s).count();
    format!(
        "No question in the plan for \"{}\" was answered ({} failed, {} skipped), so no findings could be established. \
         Check the trace files for the engine errors of each attempt.",
        plan.goal,
        count(NodeStatus::Failed),
        count(NodeStatus::Skipped)
    )
}

fn from_provider(
    plan: &AnalysisPlan,
    charts: &BTreeMap<usize, ChartSpec>,
    config: &SynthesisConfig,
    provider: &Provider,
    session: &CascadeSession,
) -> Result<(Vec<Insight>, String, Vec<String>), String> {
    let prompt = PromptBuilder::new()
        .section("Goal", &plan.goal)
        .section("Findings", findings_text(plan, charts))
        .section(
            "Instructions",
            format!(
                "Return a JSON object {{\"summary\": text, \"insights\": [{{\"statement\": text, \"category\": one of TREND, COMPARISON, EXTREME, ATTRIBUTION, \"evidence\": [node ids], \"confidence\": one of HIGH, MEDIUM, LOW}}], \"recommendations\": [text]}}. \
                 Give at most {} insights and {} recommendations. Every insight must cite the node ids it rests on.",
                config.max_insights, config.max_recommendations
            ),
        )
        .build();
    let request = provider.request(tags::SYNTHESIZE, SYNTHESIS_SYSTEM_PROMPT, prompt);
    let done = provider.complete(&request, session).map_err(|e| e.to_string())?;
    let Some(parsed) = extract_json::<ProposedReport>(&done.text) else {
        session.record_failure(tags::SYNTHESIZE, provider.policy());
        return Err("response was not a JSON report".into());
    };
    let answered: HashMap<usize, Option<ChartType>> =
        findings(plan, charts).iter().map(|f| (f.node_id, f.chart.map(|c| c.chart_type))).collect();
    let mut insights = Vec::new();
    for p in parsed.insights.into_iter().take(config.max_insights) {
        let mut ids: Vec<usize> = p.evidence.into_iter().filter(|id| answered.contains_key(id)).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() || p.statement.trim().is_empty() {
            continue;
        }
        let category = InsightCategory::parse(&p.category)
            .unwrap_or_else(|| classify_statement(&p.statement, answered[&ids[0]]));
        insights.push(Insight {
            id: format!("I{}", insights.len() + 1),
            category,
            statement: p.statement.trim().to_string(),
            evidence: ids.into_iter().map(|id| evidence_for(id, charts)).collect(),
            confidence: Confidence::parse(&p.confidence).unwrap_or(Confidence::Medium),
        });
    }
    if insights.is_empty() {
        session.record_failure(tags::SYNTHESIZE, provider.policy());
        return Err("no insight cited an answered node".into());
    }
    session.record_success(tags::SYNTHESIZE);
    let recommendations: Vec<String> = parsed
        .recommendations
        .into_iter()
        .map(|r| r.trim().to_string())
        .filter(|r| !r.is_empty())
        .take(config.max_recommendations)
        .collect();
    Ok((insights, parsed.summary.trim().to_string(), recommendations))
}

/// Aggregates answered nodes into a report. Without a provider, or when it
/// fails, the report is templated from node narratives.
pub fn synthesize(
    plan: &AnalysisPlan,
    charts: &BTreeMap<usize, ChartSpec>,
    provider: Option<(&Provider, &CascadeSession)>,
    config: &SynthesisConfig,
) -> Report {
    let mut diagnostics = Vec::new();
    let answered = findings(plan, charts).len();
    let (insights, summary, recommendations) = if answered == 0 {
        (Vec::new(), failure_summary(plan), Vec::new())
    } else {
        let live = provider.map(|(p, s)| from_provider(plan, charts, config, p, s));
        match live {
            Some(Ok(parts)) => parts,
            Some(Err(reason)) => {
                diagnostics.push(Diagnostic::warning("synthesis", format!("{reason}; used templated report")));
                templated(plan, charts, config)
            }
            None => templated(plan, charts, config),
        }
    };
    let trace_index = insights.iter().map(|i| (i.id.clone(), i.evidence.clone())).collect();
    let appendix = plan
        .subquestions()
        .map(|n| TraceEntry {
            node_id: n.id,
            question: n.text.clone(),
            status: n.status,
            chart: charts.contains_key(&n.id).then(|| chart_path(n.id)),
            trace: trace_path(n.id),
        })
        .collect();
    Report { goal: plan.goal.clone(), insights, summary, recommendations, trace_index, appendix, diagnostics }
}

impl Report {
    pub fn to_json(&self) -> String {
        to_canonical_json(self).expect("report serializes")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Analysis report\n");
        let _ = writeln!(out, "## Overview\n");
        let _ = writeln!(out, "**Goal:** {}\n", self.goal);
        let _ = writeln!(out, "{}\n", self.summary);
        let _ = writeln!(out, "## Key Insights\n");
        if self.insights.is_empty() {
            let _ = writeln!(out, "No findings.\n");
        }
        for category in InsightCategory::ALL {
            let group: Vec<&Insight> = self.insights.iter().filter(|i| i.category == category).collect();
            if group.is_empty() {
                continue;
            }
            let _ = writeln!(out, "### {}\n", category.title());
            for i in group {
                let nodes: Vec<String> = i.evidence.iter().map(|e| format!("node {}", e.node_id)).collect();
                let _ = writeln!(out, "- **{}** ({}) {} [{}]", i.id, i.confidence.as_str(), i.statement, nodes.join(", "));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "## Evidence\n");
        for i in &self.insights {
            for e in &i.evidence {
                let question = self.appendix.iter().find(|t| t.node_id == e.node_id).map(|t| t.question.as_str()).unwrap_or("");
                match &e.chart {
                    Some(path) => {
                        let _ = writeln!(out, "- {}: node {} \"{question}\", chart ![node {}]({path})", i.id, e.node_id, e.node_id);
                    }
                    None => {
                        let _ = writeln!(out, "- {}: node {} \"{question}\"", i.id, e.node_id);
                    }
                }
            }
        }
        out.push('\n');
        let _ = writeln!(out, "## Recommendations\n");
        if self.recommendations.is_empty() {
            let _ = writeln!(out, "None.");
        }
        for (n, r) in self.recommendations.iter().enumerate() {
            let _ = writeln!(out, "{}. {r}", n + 1);
        }
        out.push('\n');
        let _ = writeln!(out, "## Appendix\n");
        let _ = writeln!(out, "| node | status | question | chart | trace |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for t in &self.appendix {
            let status = serde_json::to_value(t.status).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            let _ = writeln!(
                out,
                "| {} | {status} | {} | {} | {} |",
                t.node_id,
                t.question.replace('|', "\\|"),
                t.chart.as_deref().unwrap_or("-"),
                t.trace
            );
        }
        if !self.diagnostics.is_empty() {
            let _ = writeln!(out, "\n### Diagnostics\n");
            for d in &self.diagnostics {
                let _ = writeln!(out, "- {d}");
            }
        }
        out
    }

    /// Writes report.md and report.json into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.md"), self.to_markdown())?;
        std::fs::write(dir.join("report.json"), self.to_json())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("judge failed on ground truth #{gt_index} {ground_truth:?} vs prediction #{pred_index} {predicted:?}: {message}")]
    Judge { gt_index: usize, pred_index: usize, ground_truth: String, predicted: String, message: String },
}

/// Scores how well `predicted` matches `ground_truth`, in [0, 1].
pub trait Judge: Sync {
    fn judge(&self, ground_truth: &str, predicted: &str) -> Result<f64, String>;
}

impl<F> Judge for F
where
    F: Fn(&str, &str) -> Result<f64, String> + Sync,
{
    fn judge(&self, ground_truth: &str, predicted: &str) -> Result<f64, String> {
        self(ground_truth, predicted)
    }
}

pub fn content_tokens(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[a-z0-9]+(?:\.[0-9]+)?").unwrap());
    let lower = text.to_lowercase();
    re.find_iter(&lower).map(|m| m.as_str().to_string()).filter(|t| !is_stopword(t)).collect()
}

/// Token-level F1 over lowercased tokens with stopwords removed.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalJudge;

impl LexicalJudge {
    pub fn f1(a: &str, b: &str) -> f64 {
        let (ta, tb) = (content_tokens(a), content_tokens(b));
        if ta.is_empty() && tb.is_empty() {
            return 1.0;
        }
        if ta.is_empty() || tb.is_empty() {
            return 0.0;
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in &tb {
            *counts.entry(t).or_insert(0) += 1;
        }
        let mut common = 0usize;
        for t in &ta {
            if let Some(c) = counts.get_mut(t.as_str()) {
                if *c > 0 {
                    *c -= 1;
                    common += 1;
                }
            }
        }
        if common == 0 {
            return 0.0;
        }
        let precision = common as f64 / tb.len() as f64;
        let recall = common as f64 / ta.len() as f64;
        2.0 * precision * recall / (precision + recall)
    }
}

impl Judge for LexicalJudge {
    fn judge(&self, ground_truth: &str, predicted: &str) -> Result<f64, String> {
        Ok(Self::f1(ground_truth, predicted))
    }
}

/// Asks the provider (tag "judge") for a score.
pub struct ProviderJudge<'a> {
    pub provider: &'a Provider,
    pub session: &'a CascadeSession,
}

impl Judge for ProviderJudge<'_> {
    fn judge(&self, ground_truth: &str, predicted: &str) -> Result<f64, String> {
        let prompt = PromptBuilder::new()
            .section("Reference insight", ground_truth)
            .section("Predicted insight", predicted)
            .section("Instructions", "Score from 0 (unrelated or contradictory) to 1 (same finding). Reply with the number only.")
            .build();
        let request = self.provider.request(tags::JUDGE, JUDGE_SYSTEM_PROMPT, prompt);
        let done = self.provider.complete(&request, self.session).map_err(|e: ProviderError| e.to_string())?;
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());
        re.find(&done.text)
            .and_then(|m| m.as_str().parse::<f64>().ok())
            .ok_or_else(|| format!("no score in response {:?}", done.text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Best score for each ground-truth insight.
    pub maxima: Vec<f64>,
    /// Index of the prediction achieving each maximum.
    pub best_match: Vec<Option<usize>>,
    pub mean: f64,
}

/// Mean over ground-truth insights of the best judge score among predictions.
pub fn score_insights(ground_truth: &[String], predicted: &[String], judge: &dyn Judge) -> Result<ScoreReport, ScoreError> {
    if ground_truth.is_empty() {
        return Err(ScoreError::EmptyGroundTruth);
    }
    let mut maxima = Vec::with_capacity(ground_truth.len());
    let mut best_match = Vec::with_capacity(ground_truth.len());
    for (gi, g) in ground_truth.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (pi, p) in predicted.iter().enumerate() {
            let fail = |message: String| ScoreError::Judge {
                gt_index: gi,
                pred_index: pi,
                ground_truth: g.clone(),
                predicted: p.clone(),
                message,
            };
            let s = judge.judge(g, p).map_err(fail)?;
            if !(0.0..=1.0).contains(&s) {
                return Err(fail(format!("score {s} outside [0, 1]")));
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((pi, s));
            }
        }
        maxima.push(best.map_or(0.0, |b| b.1));
        best_match.push(best.map(|b| b.0));
    }
    let mean = maxima.iter().sum::<f64>() / maxima.len() as f64;
    Ok(ScoreReport { maxima, best_match, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{ColumnProfile, ResultSummary};
    use crate::ingestion::UnifiedType;
    use crate::planner::{PlanNode, PlannerConfig};
    use crate::provider::{CascadePolicy, ProviderSettings, ScriptedBackend};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn node(id: usize, kind: NodeKind, text: &str, status: NodeStatus, narrative: Option<&str>, parent: Option<usize>) -> PlanNode {
        let answer = narrative.map(|n| ResultSummary {
            columns: vec![ColumnProfile { name: "v".into(), unified_type: UnifiedType::Float, distinct: 30 }],
            row_count: 30,
            narrative: n.into(),
            ..ResultSummary::empty()
        });
        PlanNode { id, kind, text: text.into(), status, answer, parent, depth: if parent.is_some() { 1 } else { 0 } }
    }

    fn plan(nodes: Vec<PlanNode>) -> AnalysisPlan {
        let c = PlannerConfig::default();
        AnalysisPlan { goal: "Understand sales".into(), nodes, max_questions: c.max_questions, branch_depth: c.branch_depth, diagnostics: vec![] }
    }

    fn line(title: &str) -> ChartSpec {
        ChartSpec { chart_type: ChartType::Line, x: Some("d".into()), y: vec!["v".into()], series: None, title: title.into(), notice: None }
    }

    fn sample_plan() -> (AnalysisPlan, BTreeMap<usize, ChartSpec>) {
        let p = plan(vec![
            node(0, NodeKind::Subgoal, "Trends", NodeStatus::Answered, None, None),
            node(1, NodeKind::Subquestion, "How does dau change by day?", NodeStatus::Answered, Some("dau shows an increasing trend from 100 to 180."), Some(0)),
            node(2, NodeKind::Subquestion, "Which region has the highest cvr?", NodeStatus::Answered, Some("Among 4 region values, north has the highest cvr (0.6) versus south with the lowest (0.4)."), Some(0)),
            node(3, NodeKind::Subquestion, "Broken question", NodeStatus::Failed, None, Some(0)),
        ]);
        let mut charts = BTreeMap::new();
        charts.insert(1, line("dau by day"));
        (p, charts)
    }

    #[test]
    fn keyword_fallback_categories() {
        assert_eq!(classify_statement("dau shows an increasing trend", None), InsightCategory::Trend);
        assert_eq!(classify_statement("north compared with south", None), InsightCategory::Comparison);
        assert_eq!(classify_statement("The peak was in May", None), InsightCategory::Extreme);
        assert_eq!(classify_statement("cvr is strongly negatively correlated with covid", None), InsightCategory::Attribution);
        assert_eq!(classify_statement("nothing to see", Some(ChartType::Scatter)), InsightCategory::Attribution);
        assert_eq!(classify_statement("nothing to see", None), InsightCategory::Extreme);
    }

    #[test]
    fn rising_trend_cites_the_line_node() {
        let (p, charts) = sample_plan();
        let r = synthesize(&p, &charts, None, &SynthesisConfig::default());
        let trend = r.insights.iter().find(|i| i.category == InsightCategory::Trend).expect("trend insight");
        assert_eq!(trend.evidence, vec![Evidence { node_id: 1, chart: Some("charts/1.svg".into()) }]);
        assert!(r.insights.iter().all(|i| i.evidence.iter().all(|e| p.node(e.node_id).unwrap().status == NodeStatus::Answered)));
        let md = r.to_markdown();
        for section in ["## Overview", "## Key Insights", "## Evidence", "## Recommendations", "## Appendix"] {
            assert!(md.contains(section), "{section} missing");
        }
        for i in &r.insights {
            assert!(md.contains(&i.statement));
        }
        assert_eq!(md, synthesize(&p, &charts, None, &SynthesisConfig::default()).to_markdown());
    }

    #[test]
    fn zero_answered_gives_failure_summary() {
        let p = plan(vec![
            node(0, NodeKind::Subgoal, "g", NodeStatus::Failed, None, None),
            node(1, NodeKind::Subquestion, "q", NodeStatus::Failed, None, Some(0)),
            node(2, NodeKind::Subquestion, "r", NodeStatus::Skipped, None, Some(1)),
        ]);
        let r = synthesize(&p, &BTreeMap::new(), None, &SynthesisConfig::default());
        assert!(r.insights.is_empty());
        assert!(r.summary.contains("No question") && r.summary.contains("1 failed, 1 skipped"));
        assert!(r.to_markdown().contains("No findings."));
    }

    #[test]
    fn provider_insights_are_validated() {
        let (p, charts) = sample_plan();
        let backend = Arc::new(ScriptedBackend::new());
        backend.push(
            tags::SYNTHESIZE,
            r#"{"summary": "Sales grow.", "insights": [
                {"statement": "DAU rose steadily.", "category": "TREND", "evidence": [1], "confidence": "HIGH"},
                {"statement": "Invented.", "category": "EXTREME", "evidence": [3, 99]},
                {"statement": "North leads.", "category": "bogus", "evidence": [2]}
            ], "recommendations": ["Invest in north."]}"#,
        );
        let provider = Provider::new(backend.clone(), CascadePolicy::default(), ProviderSettings::default());
        let session = CascadeSession::new();
        let r = synthesize(&p, &charts, Some((&provider, &session)), &SynthesisConfig::default());
        assert_eq!(r.insights.len(), 2);
        assert_eq!(r.insights[1].category, InsightCategory::Extreme);
        assert_eq!(r.summary, "Sales grow.");
        assert!(backend.prompts()[0].contains("[node 1] (LINE, 30 rows) How does dau change by day?"));
        assert_eq!(parse_findings(&findings_text(&p, &charts)).len(), 2);
    }

    #[test]
    fn provider_failure_falls_back_to_template() {
        let (p, charts) = sample_plan();
        let backend = Arc::new(ScriptedBackend::new());
        backend.push(tags::SYNTHESIZE, "I cannot do that.");
        let provider = Provider::new(backend, CascadePolicy::default(), ProviderSettings::default());
        let session = CascadeSession::new();
        let r = synthesize(&p, &charts, Some((&provider, &session)), &SynthesisConfig::default());
        assert_eq!(r.insights.len(), 2);
        assert_eq!(r.diagnostics.len(), 1);
    }

    fn stub(table: &'static [(&'static str, &'static str, f64)]) -> impl Judge {
        move |g: &str, p: &str| Ok(table.iter().find(|(a, b, _)| *a == g && *b == p).map_or(0.0, |t| t.2))
    }

    #[test]
    fn mean_of_maxima() {
        let j = stub(&[("g1", "p1", 0.8), ("g1", "p2", 0.3), ("g2", "p1", 0.1), ("g2", "p2", 0.4)]);
        let r = score_insights(&["g1".into(), "g2".into()], &["p1".into(), "p2".into()], &j).unwrap();
        assert_eq!(r.maxima, vec![0.8, 0.4]);
        assert!((r.mean - 0.6).abs() < 1e-12);
        assert_eq!(r.best_match, vec![Some(0), Some(1)]);
    }

    #[test]
    fn identity_scores_one_and_empty_is_an_error() {
        let gt: Vec<String> = vec!["DAU rose in Q2".into(), "North has the highest CVR".into()];
        assert_eq!(score_insights(&gt, &gt, &LexicalJudge).unwrap().mean, 1.0);
        assert!(matches!(score_insights(&[], &gt, &LexicalJudge), Err(ScoreError::EmptyGroundTruth)));
    }

    #[test]
    fn lexical_judge_by_hand() {
        // {dau, rose, q2} against {dau, fell, q2}: 2 shared of 3 each, F1 = 2/3.
        let s = LexicalJudge::f1("DAU rose in Q2", "DAU fell in Q2");
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
        assert!(s < LexicalJudge::f1("DAU rose in Q2", "DAU rose in Q2"));
    }

    #[test]
    fn judge_failure_names_the_pair() {
        let j = |_: &str, p: &str| if p == "bad" { Err("boom".to_string()) } else { Ok(0.5) };
        let err = score_insights(&["g".into()], &["ok".into(), "bad".into()], &j).unwrap_err();
        match err {
            ScoreError::Judge { gt_index, pred_index, .. } => assert_eq!((gt_index, pred_index), (0, 1)),
            e => panic!("{e}"),
        }
    }

    proptest! {
        #[test]
        fn permutation_and_monotonicity(
            gt in prop::collection::vec("[a-d]{1,3}( [a-d]{1,3}){0,3}", 1..5),
            pred in prop::collection::vec("[a-d]{1,3}( [a-d]{1,3}){0,3}", 0..6),
            extra in "[a-d]{1,3}( [a-d]{1,3}){0,3}",
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let base = score_insights(&gt, &pred, &LexicalJudge).unwrap();
            let mut shuffled = pred.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let s = score_insights(&gt, &shuffled, &LexicalJudge).unwrap();
            prop_assert_eq!(&s.maxima, &base.maxima);
            prop_assert_eq!(s.mean, base.mean);
            let mut more = pred.clone();
            more.push(extra);
            let m = score_insights(&gt, &more, &LexicalJudge).unwrap();
            prop_assert!(m.mean >= base.mean);
            for (a, b) in m.maxima.iter().zip(&base.maxima) {
                prop_assert!(a >= b);
            }
        }
    }
}
