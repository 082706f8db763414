//! Decomposes a goal into sub-goals and sub-questions with the offline
//! analyst and prints the plan tree.
//!
//! cargo run --example plan_goal -- "How does daily_cvr differ by region?"

use std::path::PathBuf;

use unilink::config::RunConfig;
use unilink::pipeline::prepare;
use unilink::planner::{decompose_goal, PlanningContext};
use unilink::provider::{CascadeSession, Provider};

fn main() -> unilink::Result<()> {
    let goal = std::env::args().nth(1).unwrap_or_else(|| "Explain how daily_cvr varies across regions and over time".into());
    let config = RunConfig {
        workspace: PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/demo/workspace"),
        ..Default::default()
    };
    let provider = Provider::offline();
    let session = CascadeSession::new();
    let prepared = prepare(&config, Some((&provider, &session)))?;
    let ctx = PlanningContext::new(&prepared.graph, &prepared.hints, &prepared.store);
    let plan = decompose_goal(&goal, &ctx, &provider, &session, &config.planner)?;

    println!("goal: {}", plan.goal);
    for node in plan.nodes.iter().filter(|n| n.parent.is_none()) {
        println!("  [{}] {}", node.id, node.text);
        for q in plan.children(node.id) {
            println!("      [{}] {}", q.id, q.text);
        }
    }
    println!(
        "\nat most {} question(s) per sub-goal with max_questions {} and branch_depth {}",
        config.planner.questions_per_subgoal_bound(),
        config.planner.max_questions,
        config.planner.branch_depth
    );
    Ok(())
}
