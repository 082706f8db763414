mod common;

use std::sync::Arc;

use common::*;
use unilink::config::RunConfig;
use unilink::fixtures::GroundTruth;
use unilink::pipeline::{analyze, analyze_with, AnalyzeOptions};
use unilink::planner::NodeStatus;
use unilink::provider::{tags, CascadePolicy, CascadeSession, Provider, ProviderSettings, ScriptedBackend};
use unilink::synthesis::{score_insights, LexicalJudge};

#[test]
fn demo_report_recovers_the_planted_insights() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = analyze(&demo_replay_config(&dir.path().join("out")), &AnalyzeOptions::default()).unwrap();
    assert_eq!(outcome.exit_code(), 0);
    let truth = GroundTruth::load(&demo_dir().join("ground_truth.json")).unwrap();
    for planted in &truth.insights {
        assert!(
            outcome.report.insights.iter().any(|i| i.category == planted.category),
            "no {:?} insight in the report",
            planted.category
        );
    }
    let predicted: Vec<String> = outcome.report.insights.iter().map(|i| i.statement.clone()).collect();
    let score = score_insights(&truth.statements(), &predicted, &|a: &str, b: &str| Ok(LexicalJudge::f1(a, b))).unwrap();
    assert!(score.mean > 0.5, "{score:?}");
}

#[test]
fn unanswerable_question_fails_without_aborting_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let scripted = Arc::new(ScriptedBackend::new());
    scripted.push(tags::SUBGOAL, r#"["Spending per customer in csv_orders"]"#);
    scripted.push(
        tags::SUBQUESTION,
        r#"["Which customer_id in csv_orders has the largest total amount?", "What is the average amount in csv_orders?"]"#,
    );
    for _ in 0..4 {
        scripted.push(tags::CODEGEN, "SELECT nope FROM csv_orders");
    }
    scripted.push(tags::CODEGEN, "SELECT AVG(amount) AS avg_amount FROM csv_orders");
    let provider = Provider::new(scripted.clone(), CascadePolicy::default(), ProviderSettings::default());
    let config = RunConfig {
        workspace: data_dir().join("workspaces/retail"),
        out_dir: dir.path().join("out"),
        goal: "Understand customer spending".into(),
        ..Default::default()
    };
    let outcome = analyze_with(&config, &provider, &CascadeSession::new(), &AnalyzeOptions::default()).unwrap();

    let statuses: Vec<NodeStatus> = outcome.plan.subquestions().map(|n| n.status).collect();
    assert_eq!(statuses, vec![NodeStatus::Failed, NodeStatus::Answered]);
    assert_eq!(outcome.exit_code(), 1);
    assert!(outcome.plan.diagnostics.iter().any(|d| d.message.contains("no working query after 4 attempt(s)")));
    let codegen_calls = scripted.calls().iter().filter(|(t, _)| t == tags::CODEGEN).count();
    assert_eq!(codegen_calls, 5);
    let out = &config.out_dir;
    assert!(out.join("report.md").is_file());
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("FAILED"), "{md}");
}
