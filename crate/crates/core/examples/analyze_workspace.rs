//! Runs the whole pipeline on a workspace with the offline analyst and prints
//! the report.
//!
//! cargo run --example analyze_workspace -- [workspace] [goal]

use std::path::PathBuf;

use unilink::config::RunConfig;
use unilink::pipeline::{analyze, AnalyzeOptions};

fn main() -> unilink::Result<()> {
    let mut args = std::env::args().skip(1);
    let workspace = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/demo/workspace"));
    let goal = args.next().unwrap_or_else(|| "Explain how daily_cvr varies across regions and over time".into());
    let config = RunConfig {
        workspace,
        goal,
        out_dir: std::env::temp_dir().join("unilink-analysis"),
        ..Default::default()
    };
    let outcome = analyze(&config, &AnalyzeOptions::default())?;
    println!("{}", outcome.report.to_markdown());
    println!("artifacts in {} ({} failed question(s))", outcome.out_dir.display(), outcome.failed_nodes());
    Ok(())
}
