//! End-to-end analysis: workspace in, report tree out.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::executor::{
    narrate, render_chart, run_with_selfcorrection, select_chart, ChartSpec, CodeAttempt, ExecutionContext,
    ResultSummary,
};
use crate::ingestion::{discover_sources, Discovery, SourceDescriptor};
use crate::linkage::{build_entity_graph, formulate_hints, EntityGraph, JoinHint};
use crate::metagraph::{build_metagraph, MetaGraph};
use crate::planner::{decompose_goal, next_pending, propose_followups, AnalysisPlan, NodeStatus, PlanningContext};
use crate::provider::{CascadeSession, Provider};
use crate::staging::{materialize, StagingStore};
use crate::synthesis::{chart_path, synthesize, trace_path, Report};
use crate::util::{write_canonical_json, Diagnostic};
use crate::{Error, Result};

pub const PLAN_FILE: &str = "plan.json";
pub const STAGING_FILE: &str = "staging.db";

/// The data side of a run: everything up to the staging store.
#[derive(Debug)]
pub struct Prepared {
    pub sources: Vec<SourceDescriptor>,
    pub graph: MetaGraph,
    pub entity: EntityGraph,
    pub hints: JoinHint,
    pub store: StagingStore,
}

/// Discovers, catalogs, links and stages a workspace.
pub fn prepare(config: &RunConfig, llm: Option<(&Provider, &CascadeSession)>) -> Result<Prepared> {
    let Discovery { sources, skipped } = discover_sources(&config.workspace)?;
    for path in &skipped {
        tracing::info!(path = %path.display(), "skipped file with unrecognized extension");
    }
    let graph = build_metagraph(&sources, &config.ingestion, llm)?;
    let entity = build_entity_graph(&graph, &config.similarity)?;
    let hints = formulate_hints(&entity, config.similarity.k);
    let store = materialize(&sources, &graph, &config.limits)?;
    Ok(Prepared { sources, graph, entity, hints, store })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalyzeOptions {
    /// Also print the plan as JSON on stdout.
    pub dump_plan: bool,
    /// Write the staging store to `<out_dir>/staging.db`.
    pub persist_staging: bool,
}

#[derive(Debug, Serialize)]
struct NodeTrace<'a> {
    node_id: usize,
    subgoal: &'a str,
    question: &'a str,
    status: NodeStatus,
    attempts: &'a [CodeAttempt],
    chart: Option<&'a ChartSpec>,
    narrative: &'a str,
}

#[derive(Debug)]
pub struct AnalysisOutcome {
    pub plan: AnalysisPlan,
    pub report: Report,
    pub charts: BTreeMap<usize, ChartSpec>,
    pub out_dir: PathBuf,
}

impl AnalysisOutcome {
    pub fn failed_nodes(&self) -> usize {
        self.plan.subquestions().filter(|n| n.status == NodeStatus::Failed).count()
    }

    /// 0 when every executed question was answered, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failed_nodes() > 0 { 1 } else { 0 }
    }
}

fn absolute(path: &Path) -> Result<PathBuf> {
    let abs = std::path::absolute(path).map_err(Error::io(format!("resolving {}", path.display())))?;
    Ok(abs.canonicalize().unwrap_or(abs))
}

/// Refuses output directories inside the workspace, which would both
/// mutate it and feed the report back in as a source on the next run.
pub fn check_out_dir(workspace: &Path, out_dir: &Path) -> Result<()> {
    let ws = absolute(workspace)?;
    let out = absolute(out_dir)?;
    if out.starts_with(&ws) {
        return Err(Error::Config(format!(
            "output directory {} lies inside the workspace {}",
            out_dir.display(),
            workspace.display()
        )));
    }
    Ok(())
}

/// Builds the provider from `config`, runs the analysis and, in RECORD
/// mode, saves the cassette.
pub fn analyze(config: &RunConfig, options: &AnalyzeOptions) -> Result<AnalysisOutcome> {
    config.validate()?;
    let (provider, recorder) = config.provider.build()?;
    let session = CascadeSession::new();
    let outcome = analyze_with(config, &provider, &session, options);
    if let (Some(recorder), Some(path)) = (recorder, config.provider.cassette.as_deref()) {
        recorder.save(path)?;
    }
    outcome
}

/// Runs the full pipeline against an existing provider and session.
pub fn analyze_with(
    config: &RunConfig,
    provider: &Provider,
    session: &CascadeSession,
    options: &AnalyzeOptions,
) -> Result<AnalysisOutcome> {
    if config.goal.trim().is_empty() {
        return Err(Error::Config("an analysis goal is required (--goal)".into()));
    }
    check_out_dir(&config.workspace, &config.out_dir)?;
    let llm = Some((provider, session));
    let prepared = prepare(config, llm)?;
    let out = config.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(Error::io(format!("creating {}", out.display())))?;
    if options.persist_staging {
        prepared.store.persist(&out.join(STAGING_FILE))?;
    }

    let planning = PlanningContext::new(&prepared.graph, &prepared.hints, &prepared.store);
    let exec_ctx = ExecutionContext::new(&prepared.store, &prepared.hints);
    let mut plan = decompose_goal(&config.goal, &planning, provider, session, &config.planner)?;
    plan.diagnostics.extend(prepared.graph.diagnostics().iter().cloned());
    plan.diagnostics.extend(prepared.store.diagnostics().iter().cloned());

    let mut charts = BTreeMap::new();
    let mut traces: BTreeMap<usize, (Vec<CodeAttempt>, String)> = BTreeMap::new();
    while let Some(id) = next_pending(&mut plan) {
        let question = plan.nodes[id].text.clone();
        let subgoal = plan.subgoal_of(id).map(|g| g.text.clone()).unwrap_or_default();
        tracing::info!(node = id, %question, "executing");
        let execution =
            run_with_selfcorrection(&question, &subgoal, &prepared.store, &exec_ctx, provider, session, &config.executor);
        let Some(result) = execution.result else {
            plan.set_status(id, NodeStatus::Failed)?;
            let last = execution.attempts.last().map(|a| a.engine_message.clone()).unwrap_or_default();
            plan.diagnostics.push(Diagnostic::warning(
                format!("node {id}"),
                format!("no working query after {} attempt(s): {last}", execution.attempts.len()),
            ));
            traces.insert(id, (execution.attempts, String::new()));
            continue;
        };
        let mut summary = ResultSummary::from_result(&result, config.executor.preview_rows);
        let spec = select_chart(&summary, &question);
        summary.narrative = narrate(&question, &summary, &result.rows, &spec, llm);
        let columns: Vec<String> = result.columns.iter().map(|c| c.name.clone()).collect();
        let chart_file = out.join(chart_path(id));
        render_chart(&spec, &columns, &result.rows, &chart_file)
            .map_err(Error::io(format!("writing {}", chart_file.display())))?;
        traces.insert(id, (execution.attempts, summary.narrative.clone()));
        charts.insert(id, spec);
        plan.answer(id, summary.clone())?;
        let (followups, diagnostics) =
            propose_followups(&plan, id, &summary, &planning, provider, session, &config.planner);
        plan.diagnostics.extend(diagnostics);
        plan.attach(followups);
    }
    plan.settle_subgoals();

    for node in plan.subquestions() {
        let (attempts, narrative) = traces.get(&node.id).map(|(a, n)| (a.as_slice(), n.as_str())).unwrap_or((&[], ""));
        let trace = NodeTrace {
            node_id: node.id,
            subgoal: plan.subgoal_of(node.id).map(|g| g.text.as_str()).unwrap_or(""),
            question: &node.text,
            status: node.status,
            attempts,
            chart: charts.get(&node.id),
            narrative,
        };
        let path = out.join(trace_path(node.id));
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(Error::io(format!("creating {}", dir.display())))?;
        }
        write_canonical_json(&path, &trace).map_err(Error::io(format!("writing {}", path.display())))?;
    }

    let report = synthesize(&plan, &charts, llm, &config.synthesis);
    report.write(&out).map_err(Error::io(format!("writing report to {}", out.display())))?;
    let plan_json = plan.to_json();
    std::fs::write(out.join(PLAN_FILE), &plan_json).map_err(Error::io("writing plan.json"))?;
    if options.dump_plan {
        println!("{plan_json}");
    }
    Ok(AnalysisOutcome { plan, report, charts, out_dir: out })
}
