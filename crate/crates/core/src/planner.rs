//! Hierarchical goal decomposition.
//!
//! A plan is a tree: the goal splits into sub-goals, each sub-goal into
//! directly answerable sub-questions, and every answered sub-question may
//! spawn follow-ups until `branch_depth` is reached. Node ids are assigned in
//! creation order, so parents always precede their children.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::executor::ResultSummary;
use crate::linkage::JoinHint;
use crate::metagraph::{render_preview, MetaGraph};
use crate::prompt::{extract_json, PromptBuilder};
use crate::provider::{tags, CascadeSession, Provider, ProviderError};
use crate::staging::StagingStore;
use crate::util::Diagnostic;

pub const PLANNER_SYSTEM_PROMPT: &str = "You are a senior data analyst. You break analytical goals into concrete questions that can each be answered with one SQL query over the tables you are shown.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeKind {
    Subgoal,
    Subquestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NodeStatus {
    Pending,
    Answered,
    Failed,
    Skipped,
}

impl NodeStatus {
    pub fn is_settled(self) -> bool {
        self != NodeStatus::Pending
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: usize,
    pub kind: NodeKind,
    pub text: String,
    pub status: NodeStatus,
    pub answer: Option<ResultSummary>,
    pub parent: Option<usize>,
    /// 0 for sub-goals, 1 for their sub-questions, +1 per follow-up level.
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub max_questions: usize,
    pub branch_depth: usize,
    /// Candidate generations per planning prompt; the most valid one wins.
    pub samples: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { max_questions: 3, branch_depth: 3, samples: 1 }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.max_questions < 1 || self.branch_depth < 1 || self.samples < 1 {
            return Err(PlanError::Config("max_questions, branch_depth and samples must all be at least 1".into()));
        }
        Ok(())
    }

    /// Upper bound on the number of sub-questions under one sub-goal.
    pub fn questions_per_subgoal_bound(&self) -> usize {
        (1..=self.branch_depth as u32).map(|d| self.max_questions.saturating_pow(d)).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("planner configuration: {0}")]
    Config(String),
    #[error("provider failed during {tag}: {source}")]
    Provider { tag: String, source: ProviderError },
    #[error("{tag} response was unusable after a reprompt: {reason}\n--- raw response ---\n{raw}")]
    Malformed { tag: String, reason: String, raw: String },
    #[error("node {0} does not exist")]
    UnknownNode(usize),
    #[error("node {id} cannot move from {from:?} to {to:?}")]
    InvalidTransition { id: usize, from: NodeStatus, to: NodeStatus },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisPlan {
    pub goal: String,
    pub nodes: Vec<PlanNode>,
    pub max_questions: usize,
    pub branch_depth: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl AnalysisPlan {
    pub fn node(&self, id: usize) -> Option<&PlanNode> {
        self.nodes.get(id)
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &PlanNode> {
        self.nodes.iter().filter(move |n| n.parent == Some(id))
    }

    /// The sub-goal a node belongs to.
    pub fn subgoal_of(&self, id: usize) -> Option<&PlanNode> {
        let mut node = self.node(id)?;
        while let Some(p) = node.parent {
            node = self.node(p)?;
        }
        (node.kind == NodeKind::Subgoal).then_some(node)
    }

    pub fn subquestions(&self) -> impl Iterator<Item = &PlanNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Subquestion)
    }

    fn push(&mut self, kind: NodeKind, text: String, parent: Option<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(PlanNode { id, kind, text, status: NodeStatus::Pending, answer: None, parent, depth });
        id
    }

    /// Moves a pending node to a settled status. Settled nodes never change.
    pub fn set_status(&mut self, id: usize, status: NodeStatus) -> Result<(), PlanError> {
        let node = self.nodes.get_mut(id).ok_or(PlanError::UnknownNode(id))?;
        if node.status.is_settled() || status == NodeStatus::Pending {
            return Err(PlanError::InvalidTransition { id, from: node.status, to: status });
        }
        node.status = status;
        Ok(())
    }

    pub fn answer(&mut self, id: usize, summary: ResultSummary) -> Result<(), PlanError> {
        self.set_status(id, NodeStatus::Answered)?;
        self.nodes[id].answer = Some(summary);
        Ok(())
    }

    /// Appends follow-ups produced by [`propose_followups`], renumbering them
    /// to the next free ids.
    pub fn attach(&mut self, followups: Vec<PlanNode>) -> Vec<usize> {
        followups.into_iter().map(|n| self.push(n.kind, n.text, n.parent, n.depth)).collect()
    }

    /// Marks each sub-goal ANSWERED when any of its questions was answered,
    /// FAILED otherwise. Called once the loop has finished.
    pub fn settle_subgoals(&mut self) {
        let goals: Vec<usize> =
            self.nodes.iter().filter(|n| n.kind == NodeKind::Subgoal && !n.status.is_settled()).map(|n| n.id).collect();
        for g in goals {
            let answered = self
                .nodes
                .iter()
                .any(|n| n.status == NodeStatus::Answered && self.subgoal_of(n.id).map(|s| s.id) == Some(g));
            self.nodes[g].status = if answered { NodeStatus::Answered } else { NodeStatus::Failed };
        }
    }

    pub fn to_json(&self) -> String {
        crate::util::to_canonical_json(self).expect("plan serializes")
    }
}

/// Skips questions whose parent question failed or was skipped, then returns
/// the id of the earliest pending sub-question.
pub fn next_pending(plan: &mut AnalysisPlan) -> Option<usize> {
    for i in 0..plan.nodes.len() {
        let node = &plan.nodes[i];
        if node.status != NodeStatus::Pending || node.kind != NodeKind::Subquestion {
            continue;
        }
        let blocked = node.parent.and_then(|p| plan.nodes.get(p)).is_some_and(|p| {
            p.kind == NodeKind::Subquestion && matches!(p.status, NodeStatus::Failed | NodeStatus::Skipped)
        });
        if blocked {
            plan.nodes[i].status = NodeStatus::Skipped;
        }
    }
    plan.nodes.iter().find(|n| n.kind == NodeKind::Subquestion && n.status == NodeStatus::Pending).map(|n| n.id)
}

/// What planning prompts show the model about the data.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningContext {
    pub preview: String,
    pub hints: String,
    pub schema: String,
    /// Lowercased table and column names a valid question must mention.
    pub vocabulary: BTreeSet<String>,
}

impl PlanningContext {
    pub fn new(graph: &MetaGraph, hints: &JoinHint, store: &StagingStore) -> Self {
        let mut vocabulary = BTreeSet::new();
        for c in graph.columns() {
            vocabulary.insert(c.name().to_lowercase());
        }
        for t in store.tables() {
            vocabulary.insert(t.name.to_lowercase());
            for c in &t.columns {
                vocabulary.insert(c.name.to_lowercase());
            }
        }
        Self { preview: render_preview(graph, 3), hints: hints.rendered.clone(), schema: store.schema_text(), vocabulary }
    }

    /// Whether `text` names at least one known table or column.
    pub fn is_grounded(&self, text: &str) -> bool {
        text.to_lowercase()
            .split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.'))
            .flat_map(|t| std::iter::once(t).chain(t.split('.')))
            .any(|t| self.vocabulary.contains(t.trim_matches('.')))
    }
}

fn base_prompt(goal: &str, ctx: &PlanningContext) -> PromptBuilder {
    PromptBuilder::new()
        .section("Goal", goal)
        .section("Data catalog", &ctx.preview)
        .section("Join hints", &ctx.hints)
        .section("Staging schema", &ctx.schema)
}

fn subgoal_prompt(goal: &str, ctx: &PlanningContext, config: &PlannerConfig) -> PromptBuilder {
    base_prompt(goal, ctx).section(
        "Instructions",
        format!(
            "Reason about what could explain or characterize the goal, using background knowledge of the domain. \
             Return a JSON array of 1 to {} short analysis sub-goals, most important first. \
             Each sub-goal must name the tables or columns it concerns.",
            config.max_questions
        ),
    )
}

fn subquestion_prompt(goal: &str, subgoal: &str, ctx: &PlanningContext, config: &PlannerConfig) -> PromptBuilder {
    base_prompt(goal, ctx).section("Sub-goal", subgoal).section(
        "Instructions",
        format!(
            "Return a JSON array of 1 to {} self-contained questions for this sub-goal. \
             Each question must be answerable by one SQL query over the staging schema and must name \
             the exact tables and columns it uses. Use the join hints when a question spans sources.",
            config.max_questions
        ),
    )
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    raw: String,
    valid: Vec<String>,
    problem: Option<String>,
}

fn parse_items(raw: &str, ctx: &PlanningContext, limit: usize) -> Candidate {
    let items = extract_json::<Vec<serde_json::Value>>(raw).map(|values| {
        values
            .into_iter()
            .filter_map(|v| match v {
                serde_json::Value::String(s) => Some(s),
                serde_json::Value::Object(o) => ["question", "text", "subgoal", "goal"]
                    .iter()
                    .find_map(|k| o.get(*k).and_then(|v| v.as_str()).map(str::to_string)),
                _ => None,
            })
            .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
    });
    match items {
        None => Candidate { raw: raw.to_string(), valid: Vec::new(), problem: Some("response is not a JSON array".into()) },
        Some(items) => {
            let mut seen = BTreeSet::new();
            let valid: Vec<String> =
                items.iter().filter(|s| ctx.is_grounded(s) && seen.insert(s.to_lowercase())).take(limit).cloned().collect();
            let problem = valid.is_empty().then(|| {
                if items.is_empty() {
                    "the array is empty".to_string()
                } else {
                    "no item names a table or column from the staging schema".to_string()
                }
            });
            Candidate { raw: raw.to_string(), valid, problem }
        }
    }
}

/// Sends a planning prompt (with `samples` candidates), picks the candidate
/// with the most valid items, and reprompts once if none is usable.
fn ask_list(
    tag: &str,
    prompt: PromptBuilder,
    ctx: &PlanningContext,
    limit: usize,
    samples: usize,
    provider: &Provider,
    session: &CascadeSession,
) -> Result<Vec<String>, PlanError> {
    let provider_err = |source| PlanError::Provider { tag: tag.to_string(), source };
    let mut last: Option<Candidate> = None;
    for round in 0..2 {
        let mut builder = prompt.clone();
        if let Some(prev) = &last {
            builder = builder
                .section("Previous response", &prev.raw)
                .section("Problem", prev.problem.as_deref().unwrap_or("unusable response"));
        }
        let mut best: Option<Candidate> = None;
        for i in 0..samples {
            let mut b = builder.clone();
            if samples > 1 {
                b = b.section("Candidate", format!("Candidate {} of {samples}", i + 1));
            }
            let request = provider.request(tag, PLANNER_SYSTEM_PROMPT, b.build());
            let done = provider.complete(&request, session).map_err(provider_err)?;
            let cand = parse_items(&done.text, ctx, limit);
            if best.as_ref().is_none_or(|b| cand.valid.len() > b.valid.len()) {
                best = Some(cand);
            }
        }
        let best = best.expect("samples >= 1");
        if best.problem.is_none() {
            session.record_success(tag);
            return Ok(best.valid);
        }
        session.record_failure(tag, provider.policy());
        tracing::warn!(tag, round, problem = ?best.problem, "planner response rejected");
        last = Some(best);
    }
    let last = last.expect("two rounds ran");
    Err(PlanError::Malformed { tag: tag.to_string(), reason: last.problem.unwrap_or_default(), raw: last.raw })
}

/// Builds the two-level plan: sub-goals first, then sub-questions for each.
pub fn decompose_goal(
    goal: &str,
    ctx: &PlanningContext,
    provider: &Provider,
    session: &CascadeSession,
    config: &PlannerConfig,
) -> Result<AnalysisPlan, PlanError> {
    config.validate()?;
    let mut plan = AnalysisPlan {
        goal: goal.to_string(),
        nodes: Vec::new(),
        max_questions: config.max_questions,
        branch_depth: config.branch_depth,
        diagnostics: Vec::new(),
    };
    let subgoals = ask_list(
        tags::SUBGOAL,
        subgoal_prompt(goal, ctx, config),
        ctx,
        config.max_questions,
        config.samples,
        provider,
        session,
    )?;
    let goal_ids: Vec<usize> = subgoals.into_iter().map(|s| plan.push(NodeKind::Subgoal, s, None, 0)).collect();
    for g in goal_ids {
        let text = plan.nodes[g].text.clone();
        let questions = ask_list(
            tags::SUBQUESTION,
            subquestion_prompt(goal, &text, ctx, config),
            ctx,
            config.max_questions,
            config.samples,
            provider,
            session,
        )?;
        for q in questions {
            plan.push(NodeKind::Subquestion, q, Some(g), 1);
        }
    }
    Ok(plan)
}

/// Follow-up questions for an answered node, plus any diagnostics. Provider
/// trouble downgrades to an empty list.
pub fn propose_followups(
    plan: &AnalysisPlan,
    node_id: usize,
    result: &ResultSummary,
    ctx: &PlanningContext,
    provider: &Provider,
    session: &CascadeSession,
    config: &PlannerConfig,
) -> (Vec<PlanNode>, Vec<Diagnostic>) {
    let Some(node) = plan.node(node_id) else {
        return (Vec::new(), vec![Diagnostic::warning("planner", format!("node {node_id} does not exist"))]);
    };
    if node.status != NodeStatus::Answered || node.kind != NodeKind::Subquestion || node.depth >= config.branch_depth {
        return (Vec::new(), Vec::new());
    }
    let subgoal = plan.subgoal_of(node_id).map(|g| g.text.clone()).unwrap_or_default();
    let prompt = base_prompt(&plan.goal, ctx)
        .section("Sub-goal", &subgoal)
        .section("Answered question", &node.text)
        .section("Observation", &result.narrative)
        .section("Result", result.preview_text(20))
        .section(
            "Instructions",
            format!(
                "If the result shows an anomaly worth explaining (an unusually high or low category, a break in a trend), \
                 return a JSON array of at most {} follow-up questions that drill into it. Each must name the exact \
                 tables and columns it uses. Return [] when nothing needs explaining.",
                config.max_questions
            ),
        );
    let request = provider.request(tags::FOLLOWUP, PLANNER_SYSTEM_PROMPT, prompt.build());
    let subject = format!("node {node_id}");
    let response = match provider.complete(&request, session) {
        Ok(r) => r,
        Err(e) => return (Vec::new(), vec![Diagnostic::warning(subject, format!("follow-up generation failed: {e}"))]),
    };
    let cand = parse_items(&response.text, ctx, config.max_questions);
    let mut diagnostics = Vec::new();
    if extract_json::<Vec<serde_json::Value>>(&response.text).is_none() {
        session.record_failure(tags::FOLLOWUP, provider.policy());
        diagnostics.push(Diagnostic::warning(&subject, "follow-up response was not a JSON array; ignored"));
        return (Vec::new(), diagnostics);
    }
    session.record_success(tags::FOLLOWUP);
    let existing: BTreeSet<String> = plan.nodes.iter().map(|n| n.text.to_lowercase()).collect();
    let nodes = cand
        .valid
        .into_iter()
        .filter(|t| !existing.contains(&t.to_lowercase()))
        .enumerate()
        .map(|(i, text)| PlanNode {
            id: plan.nodes.len() + i,
            kind: NodeKind::Subquestion,
            text,
            status: NodeStatus::Pending,
            answer: None,
            parent: Some(node_id),
            depth: node.depth + 1,
        })
        .collect();
    (nodes, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{CascadePolicy, ProviderSettings, RetryPolicy, ScriptedBackend};
    use std::sync::Arc;

    fn ctx() -> PlanningContext {
        PlanningContext {
            preview: "csv.sales.amount [FLOAT]\n".into(),
            hints: "No cross-source joins discovered.".into(),
            schema: "csv_sales(region TEXT, amount FLOAT)\n".into(),
            vocabulary: ["csv_sales", "region", "amount"].iter().map(|s| s.to_string()).collect(),
        }
    }

    fn provider(backend: Arc<ScriptedBackend>) -> Provider {
        let settings = ProviderSettings { retry: RetryPolicy { max_attempts: 1, base_backoff_ms: 0 }, ..Default::default() };
        Provider::new(backend, CascadePolicy::default(), settings)
    }

    fn plan_with(statuses: &[(NodeKind, Option<usize>, NodeStatus)]) -> AnalysisPlan {
        let mut plan = AnalysisPlan { goal: "g".into(), nodes: vec![], max_questions: 3, branch_depth: 3, diagnostics: vec![] };
        for (kind, parent, status) in statuses {
            let depth = parent.map_or(0, |p| plan.nodes[p].depth + 1);
            let id = plan.push(*kind, format!("n{}", plan.nodes.len()), *parent, depth);
            plan.nodes[id].status = *status;
        }
        plan
    }

    #[test]
    fn one_by_one_bound_gives_a_single_question() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push(tags::SUBGOAL, r#"["Look at amount by region in csv_sales", "another on amount"]"#);
        backend.push(tags::SUBQUESTION, r#"["What is the total amount per region in csv_sales?", "What is the max amount?"]"#);
        let config = PlannerConfig { max_questions: 1, branch_depth: 1, samples: 1 };
        let plan = decompose_goal("why", &ctx(), &provider(backend), &CascadeSession::new(), &config).unwrap();
        assert_eq!(plan.nodes.len(), 2);
        assert_eq!(plan.nodes[0].kind, NodeKind::Subgoal);
        assert_eq!(plan.nodes[1].parent, Some(0));
        assert_eq!(plan.nodes[1].depth, 1);
    }

    #[test]
    fn malformed_twice_is_an_error_with_the_raw_response() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push(tags::SUBGOAL, "I think we should look at sales");
        backend.push(tags::SUBGOAL, "{not json");
        let session = CascadeSession::new();
        let err = decompose_goal("why", &ctx(), &provider(backend.clone()), &session, &PlannerConfig::default()).unwrap_err();
        match err {
            PlanError::Malformed { raw, .. } => assert_eq!(raw, "{not json"),
            other => panic!("{other:?}"),
        }
        assert_eq!(backend.calls().len(), 2);
        assert!(backend.prompts()[1].contains("## Previous response\nI think we should look at sales"));
    }

    #[test]
    fn ungrounded_items_are_dropped_and_reprompted() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push(tags::SUBGOAL, r#"["think about life"]"#);
        backend.push(tags::SUBGOAL, r#"["amount by region", "think about life"]"#);
        backend.push(tags::SUBQUESTION, r#"["total amount per region in csv_sales"]"#);
        let plan = decompose_goal("why", &ctx(), &provider(backend), &CascadeSession::new(), &PlannerConfig::default()).unwrap();
        assert_eq!(plan.nodes.iter().map(|n| n.text.as_str()).collect::<Vec<_>>(), vec![
            "amount by region",
            "total amount per region in csv_sales"
        ]);
    }

    #[test]
    fn samples_pick_the_most_valid_candidate() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push(tags::SUBGOAL, r#"["amount"]"#);
        backend.push(tags::SUBGOAL, r#"["amount", "region"]"#);
        backend.push(tags::SUBQUESTION, r#"["q amount"]"#);
        backend.push(tags::SUBQUESTION, r#"["q amount"]"#);
        backend.push(tags::SUBQUESTION, r#"["q region"]"#);
        backend.push(tags::SUBQUESTION, r#"["q region"]"#);
        let config = PlannerConfig { samples: 2, ..Default::default() };
        let plan = decompose_goal("why", &ctx(), &provider(backend.clone()), &CascadeSession::new(), &config).unwrap();
        assert_eq!(plan.nodes.iter().filter(|n| n.kind == NodeKind::Subgoal).count(), 2);
        assert!(backend.prompts()[1].contains("Candidate 2 of 2"));
    }

    #[test]
    fn next_pending_orders_and_skips() {
        use NodeKind::*;
        use NodeStatus::*;
        let mut plan = plan_with(&[(Subgoal, None, Pending), (Subquestion, Some(0), Pending), (Subquestion, Some(0), Pending)]);
        assert_eq!(next_pending(&mut plan), Some(1));
        assert_eq!(next_pending(&mut plan), Some(1));

        let mut plan = plan_with(&[(Subgoal, None, Pending), (Subquestion, Some(0), Failed), (Subquestion, Some(1), Pending), (Subquestion, Some(2), Pending)]);
        assert_eq!(next_pending(&mut plan), None);
        assert_eq!(plan.nodes[2].status, Skipped);
        assert_eq!(plan.nodes[3].status, Skipped);

        let mut plan = plan_with(&[(Subgoal, None, Pending), (Subquestion, Some(0), Answered)]);
        assert_eq!(next_pending(&mut plan), None);
    }

    #[test]
    fn settled_nodes_never_revert() {
        use NodeKind::*;
        let mut plan = plan_with(&[(Subgoal, None, NodeStatus::Pending), (Subquestion, Some(0), NodeStatus::Pending)]);
        plan.set_status(1, NodeStatus::Failed).unwrap();
        assert!(plan.set_status(1, NodeStatus::Answered).is_err());
        assert!(plan.set_status(1, NodeStatus::Pending).is_err());
        assert!(matches!(plan.set_status(9, NodeStatus::Failed), Err(PlanError::UnknownNode(9))));
    }

    #[test]
    fn followups_respect_depth_and_failures() {
        use NodeKind::*;
        let backend = Arc::new(ScriptedBackend::new());
        let p = provider(backend.clone());
        let session = CascadeSession::new();
        let config = PlannerConfig { branch_depth: 1, ..Default::default() };
        let plan = plan_with(&[(Subgoal, None, NodeStatus::Pending), (Subquestion, Some(0), NodeStatus::Answered)]);
        let result = ResultSummary::empty();
        let (nodes, _) = propose_followups(&plan, 1, &result, &ctx(), &p, &session, &config);
        assert!(nodes.is_empty());
        assert!(backend.calls().is_empty());

        backend.push_error(tags::FOLLOWUP, ProviderError::Timeout("slow".into()));
        let (nodes, diags) = propose_followups(&plan, 1, &result, &ctx(), &p, &session, &PlannerConfig::default());
        assert!(nodes.is_empty());
        assert_eq!(diags.len(), 1);

        backend.push(tags::FOLLOWUP, r#"["Which region drives the low amount in csv_sales?"]"#);
        let (nodes, _) = propose_followups(&plan, 1, &result, &ctx(), &p, &session, &PlannerConfig::default());
        assert_eq!(nodes.len(), 1);
        assert_eq!((nodes[0].id, nodes[0].parent, nodes[0].depth), (2, Some(1), 2));
    }

    #[test]
    fn termination_bound() {
        assert_eq!(PlannerConfig { max_questions: 3, branch_depth: 3, samples: 1 }.questions_per_subgoal_bound(), 39);
        assert_eq!(PlannerConfig { max_questions: 1, branch_depth: 1, samples: 1 }.questions_per_subgoal_bound(), 1);
    }
}
