//! A deterministic, rule-based analyst that answers every request tag from
//! the prompt alone. It drives the full pipeline without a model, and its
//! responses are what the shipped cassettes were recorded from.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::json;

use super::{tags, ChatBackend, LlmRequest, ProviderError};
use crate::executor::ChartType;
use crate::ingestion::text::extractive_summary;
use crate::prompt::section;
use crate::synthesis::{classify_statement, parse_findings, recommendation, InsightCategory, LexicalJudge};

#[derive(Debug, Default)]
pub struct OfflineBackend;

impl OfflineBackend {
    pub fn new() -> Self {
        Self
    }
}

impl ChatBackend for OfflineBackend {
    fn chat(&self, _model: &str, request: &LlmRequest) -> Result<String, ProviderError> {
        let p = request.user_prompt.as_str();
        let out = match request.request_tag.as_str() {
            tags::SUMMARY => summary(p),
            tags::SUBGOAL => subgoals(p),
            tags::SUBQUESTION => subquestions(p),
            tags::FOLLOWUP => followups(p),
            tags::CODEGEN => codegen(p),
            tags::OBSERVE => section(p, "Observed facts").unwrap_or("").to_string(),
            tags::SYNTHESIZE => synthesize(p),
            tags::JUDGE => judge(p),
            other => return Err(ProviderError::Unsupported { tag: other.to_string() }),
        };
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Table {
    name: String,
    columns: Vec<(String, String)>,
    rows: usize,
}

impl Table {
    fn numeric(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().filter(|(_, t)| t == "FLOAT" || t == "INT").map(|(n, _)| n.as_str())
    }

    fn of_type<'a>(&'a self, types: &'a [&str]) -> impl Iterator<Item = &'a str> {
        self.columns.iter().filter(move |(_, t)| types.contains(&t.as_str())).map(|(n, _)| n.as_str())
    }

    fn has(&self, column: &str) -> bool {
        self.columns.iter().any(|(n, _)| n == column)
    }
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).unwrap())
}

fn tables(prompt: &str) -> Vec<Table> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let line = re(&RE, r"^(\w+)\((.*)\)\s+-- (\d+) rows");
    section(prompt, "Staging schema")
        .unwrap_or("")
        .lines()
        .filter_map(|l| {
            let c = line.captures(l)?;
            let columns = c[2]
                .split(", ")
                .filter_map(|col| col.rsplit_once(' ').map(|(n, t)| (n.to_string(), t.to_string())))
                .collect();
            Some(Table { name: c[1].to_string(), columns, rows: c[3].parse().unwrap_or(0) })
        })
        .collect()
}

/// Staging table and column for a catalog alias such as `csv.sales.user_id`.
fn staged(alias: &str, tables: &[Table]) -> Option<(String, String)> {
    let (prefix, column) = alias.rsplit_once('.')?;
    let name: String = prefix.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    tables.iter().find(|t| t.name == name && t.has(column)).map(|t| (t.name.clone(), column.to_string()))
}

fn join_pairs(prompt: &str, tables: &[Table]) -> Vec<((String, String), (String, String))> {
    let hints = section(prompt, "Join hints").unwrap_or("");
    hints
        .lines()
        .filter_map(|l| l.strip_prefix(crate::linkage::HINT_PREFIX))
        .filter_map(|l| {
            let (a, b) = l.split_once(" = ")?;
            Some((staged(a.trim(), tables)?, staged(b.trim(), tables)?))
        })
        .collect()
}

/// What the analyst decides to look at.
struct Focus {
    fact: Table,
    metric: String,
    time: Option<String>,
    category: Option<String>,
    /// `(fact key, dimension table, dimension key, dimension label)`.
    dimension: Option<(String, String, String, String)>,
}

fn words(s: &str) -> Vec<String> {
    s.to_lowercase().split(|c: char| !c.is_ascii_alphanumeric()).filter(|w| w.len() > 1).map(str::to_string).collect()
}

fn focus(prompt: &str) -> Option<Focus> {
    let all = tables(prompt);
    let fact = all
        .iter()
        .filter(|t| t.name != crate::staging::TEXT_DOCUMENTS && t.name != crate::staging::REJECTS_TABLE)
        .filter(|t| t.numeric().next().is_some())
        .max_by(|a, b| a.rows.cmp(&b.rows).then_with(|| b.name.cmp(&a.name)))?
        .clone();
    let goal = section(prompt, "Goal").unwrap_or("").to_lowercase();
    let goal_words = words(&goal);
    let score = |c: &str| {
        let exact = usize::from(goal.contains(&c.to_lowercase())) * 10;
        exact + words(c).iter().filter(|w| goal_words.contains(w)).count()
    };
    let mut best: Option<(&str, usize)> = None;
    for c in fact.of_type(&["FLOAT"]).chain(fact.of_type(&["INT"])) {
        let s = score(c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    let metric = best?.0.to_string();
    let time = fact
        .of_type(&["DATE", "DATETIME"])
        .next()
        .or_else(|| {
            fact.of_type(&["INT"]).find(|c| crate::executor::is_temporal_column(c, crate::ingestion::UnifiedType::Int))
        })
        .map(str::to_string);
    let mut dimension = None;
    let mut category = None;
    for ((ta, ca), (tb, cb)) in join_pairs(prompt, &all) {
        let (key, other, other_key) = if ta == fact.name {
            (ca, tb, cb)
        } else if tb == fact.name {
            (cb, ta, ca)
        } else {
            continue;
        };
        if other == fact.name {
            continue;
        }
        category.get_or_insert(key.clone());
        if dimension.is_none() {
            let Some(dim) = all.iter().find(|t| t.name == other) else { continue };
            let label = dim
                .of_type(&["TEXT"])
                .filter(|c| *c != other_key)
                .find(|c| c.ends_with("name") || c.ends_with("label"))
                .or_else(|| dim.of_type(&["TEXT"]).find(|c| *c != other_key));
            if let Some(label) = label {
                dimension = Some((key, other.clone(), other_key, label.to_string()));
            }
        }
    }
    if category.is_none() {
        let text: Vec<&str> = fact.of_type(&["TEXT"]).collect();
        category = text
            .iter()
            .find(|c| ["_id", "_code", "_name", "region", "segment", "category"].iter().any(|s| c.ends_with(s)))
            .or(text.first())
            .map(|c| c.to_string());
    }
    Some(Focus { fact, metric, time, category, dimension })
}

fn limit(prompt: &str) -> usize {
    static RE: OnceLock<Regex> = OnceLock::new();
    section(prompt, "Instructions")
        .and_then(|i| re(&RE, r"1 to (\d+)").captures(i))
        .and_then(|c| c[1].parse().ok())
        .unwrap_or(3)
}

fn subgoals(prompt: &str) -> String {
    let Some(f) = focus(prompt) else {
        return "[]".into();
    };
    let (t, m) = (&f.fact.name, &f.metric);
    let mut out = Vec::new();
    if let Some(d) = &f.time {
        out.push(format!("Trend of {m} over {d} in {t}"));
    }
    if let Some(c) = &f.category {
        out.push(format!("Differences in {m} across {c} in {t}"));
    }
    out.push(format!("Drivers of {m} among the numeric columns of {t}"));
    out.truncate(limit(prompt));
    json!(out).to_string()
}

fn subquestions(prompt: &str) -> String {
    static TREND: OnceLock<Regex> = OnceLock::new();
    static DIFF: OnceLock<Regex> = OnceLock::new();
    static DRIVERS: OnceLock<Regex> = OnceLock::new();
    let goal = section(prompt, "Sub-goal").unwrap_or("");
    let f = focus(prompt);
    let mut out = Vec::new();
    if let Some(c) = re(&TREND, r"^Trend of (\w+) over (\w+) in (\w+)$").captures(goal) {
        let (m, d, t) = (&c[1], &c[2], &c[3]);
        out.push(format!("How does the average {m} change over {d} in {t}?"));
        if let Some(cat) = f.as_ref().and_then(|f| f.category.clone()) {
            out.push(format!("Which {d} and {cat} have the highest {m} in {t}?"));
        }
    } else if let Some(c) = re(&DIFF, r"^Differences in (\w+) across (\w+) in (\w+)$").captures(goal) {
        let (m, cat, t) = (&c[1], &c[2], &c[3]);
        out.push(format!("How does the average {m} compare across {cat} in {t}?"));
        if let Some((key, dim, dim_key, label)) = f.and_then(|f| f.dimension).filter(|d| d.0 == cat) {
            out.push(format!("How does the average {m} compare across {dim}.{label} when {t}.{key} is joined to {dim}.{dim_key}?"));
        }
    } else if let Some(c) = re(&DRIVERS, r"^Drivers of (\w+) among the numeric columns of (\w+)$").captures(goal) {
        out.push(format!("Which numeric columns of {} are most correlated with {}?", &c[2], &c[1]));
    }
    out.truncate(limit(prompt));
    json!(out).to_string()
}

fn followups(prompt: &str) -> String {
    static CORR: OnceLock<Regex> = OnceLock::new();
    let asked = section(prompt, "Answered question").unwrap_or("");
    let Some(c) = re(&CORR, r"^Which numeric columns of (\w+) are most correlated with (\w+)\?$").captures(asked) else {
        return "[]".into();
    };
    let top = section(prompt, "Result").and_then(|r| r.lines().nth(1)).and_then(|l| l.split(" | ").next());
    match top {
        Some(driver) if !driver.starts_with("...") && !driver.is_empty() => {
            json!([format!("How does {} relate to {driver} in {}?", &c[2], &c[1])]).to_string()
        }
        _ => "[]".into(),
    }
}

fn q(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

fn codegen(prompt: &str) -> String {
    static TREND: OnceLock<Regex> = OnceLock::new();
    static EXTREME: OnceLock<Regex> = OnceLock::new();
    static COMPARE: OnceLock<Regex> = OnceLock::new();
    static JOINED: OnceLock<Regex> = OnceLock::new();
    static CORR: OnceLock<Regex> = OnceLock::new();
    static RELATE: OnceLock<Regex> = OnceLock::new();
    let question = section(prompt, "Sub-question").unwrap_or("");
    let all = tables(prompt);
    let sql = if let Some(c) = re(&TREND, r"^How does the average (\w+) change over (\w+) in (\w+)\?$").captures(question) {
        let (m, d, t) = (&c[1], &c[2], &c[3]);
        format!(
            "SELECT {dq}, AVG({mq}) AS {avg} FROM {tq} GROUP BY {dq} ORDER BY {dq}",
            dq = q(d),
            mq = q(m),
            avg = q(&format!("avg_{m}")),
            tq = q(t)
        )
    } else if let Some(c) = re(&EXTREME, r"^Which (\w+) and (\w+) have the highest (\w+) in (\w+)\?$").captures(question) {
        let (d, cat, m, t) = (q(&c[1]), q(&c[2]), q(&c[3]), q(&c[4]));
        format!("SELECT {d}, {cat}, {m} FROM {t} WHERE {m} IS NOT NULL ORDER BY {m} DESC, {d}, {cat} LIMIT 10")
    } else if let Some(c) = re(&JOINED, r"^How does the average (\w+) compare across (\w+)\.(\w+) when (\w+)\.(\w+) is joined to (\w+)\.(\w+)\?$")
        .captures(question)
    {
        let (m, dim, label, t, key, dim2, dim_key) = (&c[1], &c[2], &c[3], &c[4], &c[5], &c[6], &c[7]);
        format!(
            "SELECT d.{label}, AVG(f.{m}) AS {avg} FROM {t} AS f JOIN {dim2} AS d ON f.{key} = d.{dim_key} GROUP BY d.{label} ORDER BY d.{label}",
            label = q(label),
            m = q(m),
            avg = q(&format!("avg_{}", &c[1])),
            t = q(t),
            dim2 = q(if dim == dim2 { dim } else { dim2 }),
            key = q(key),
            dim_key = q(dim_key)
        )
    } else if let Some(c) = re(&COMPARE, r"^How does the average (\w+) compare across (\w+) in (\w+)\?$").captures(question) {
        let (m, cat, t) = (&c[1], &c[2], &c[3]);
        format!(
            "SELECT {cat}, AVG({mq}) AS {avg} FROM {t} GROUP BY {cat} ORDER BY {cat}",
            cat = q(cat),
            mq = q(m),
            avg = q(&format!("avg_{m}")),
            t = q(t)
        )
    } else if let Some(c) = re(&CORR, r"^Which numeric columns of (\w+) are most correlated with (\w+)\?$").captures(question) {
        let (t, m) = (&c[1], &c[2]);
        let table = all.iter().find(|x| x.name == *t);
        let drivers: Vec<String> = table.map(|x| x.numeric().filter(|n| *n != m).map(str::to_string).collect()).unwrap_or_default();
        if drivers.is_empty() {
            format!("SELECT COUNT(*) AS row_count FROM {}", q(t))
        } else {
            let (mq, tq) = (q(m), q(t));
            let parts: Vec<String> = drivers
                .iter()
                .map(|x| {
                    let xq = q(x);
                    let cov = format!("(AVG({xq} * {mq}) - AVG({xq}) * AVG({mq}))");
                    format!(
                        "SELECT '{x}' AS driver, {cov} * {cov} / ((AVG({xq} * {xq}) - AVG({xq}) * AVG({xq})) * (AVG({mq} * {mq}) - AVG({mq}) * AVG({mq}))) AS r_squared FROM {tq}"
                    )
                })
                .collect();
            format!("SELECT driver, r_squared FROM ({}) WHERE r_squared IS NOT NULL ORDER BY r_squared DESC, driver", parts.join(" UNION ALL "))
        }
    } else if let Some(c) = re(&RELATE, r"^How does (\w+) relate to (\w+) in (\w+)\?$").captures(question) {
        let (m, x, t) = (q(&c[1]), q(&c[2]), q(&c[3]));
        format!("SELECT {x}, {m} FROM {t} WHERE {x} IS NOT NULL AND {m} IS NOT NULL ORDER BY {x}, {m}")
    } else {
        let mentioned = all.iter().find(|t| question.contains(&t.name)).or(all.first());
        match mentioned {
            Some(t) => format!("SELECT COUNT(*) AS row_count FROM {}", q(&t.name)),
            None => "SELECT 1 AS unanswerable".to_string(),
        }
    };
    format!("```sql\n{sql}\n```")
}

fn summary(prompt: &str) -> String {
    let doc = section(prompt, "Document").unwrap_or("");
    let (summary, key_terms) = extractive_summary(doc);
    json!({ "summary": summary, "key_terms": key_terms }).to_string()
}

fn first_sentence(text: &str) -> String {
    crate::ingestion::text::split_sentences(text).into_iter().next().unwrap_or_default()
}

fn synthesize(prompt: &str) -> String {
    let goal = section(prompt, "Goal").unwrap_or("");
    let findings = parse_findings(section(prompt, "Findings").unwrap_or(""));
    let mut insights = Vec::new();
    let mut recommendations: Vec<String> = Vec::new();
    let mut seen = Vec::new();
    for (node, chart, rows, question, observation) in &findings {
        let category = classify_statement(observation, Some(*chart));
        let statement = first_sentence(observation);
        if statement.is_empty() {
            continue;
        }
        let confidence = match (category, chart, rows) {
            (_, _, r) if *r < 3 => "LOW",
            (InsightCategory::Attribution, ChartType::Scatter, _) if observation.contains("weakly") => "LOW",
            (_, _, r) if *r >= 20 => "HIGH",
            _ => "MEDIUM",
        };
        insights.push(json!({
            "statement": statement,
            "category": category.as_str(),
            "evidence": [node],
            "confidence": confidence,
        }));
        if !seen.contains(&category) {
            seen.push(category);
            recommendations.push(recommendation(category, question));
        }
    }
    let lead: Vec<String> = insights.iter().take(2).filter_map(|i| i["statement"].as_str().map(str::to_string)).collect();
    let summary = format!(
        "For the goal \"{goal}\", {} of the answered questions yielded findings. {}",
        insights.len(),
        lead.join(" ")
    );
    json!({ "summary": summary.trim(), "insights": insights, "recommendations": recommendations }).to_string()
}

fn judge(prompt: &str) -> String {
    let a = section(prompt, "Reference insight").unwrap_or("");
    let b = section(prompt, "Predicted insight").unwrap_or("");
    crate::util::format_decimal(LexicalJudge::f1(a, b), 4)
}
