//! Catalogs every column of a workspace.
//!
//! cargo run --example inspect_catalog -- [workspace]

use std::path::PathBuf;

use unilink::ingestion::{discover_sources, IngestionConfig};
use unilink::metagraph::{build_metagraph, render_preview};

fn main() -> unilink::Result<()> {
    let workspace = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/workspaces/retail"));
    let discovery = discover_sources(&workspace)?;
    for s in &discovery.sources {
        println!("source {} ({})", s.path.display(), s.format.as_str());
    }
    let graph = build_metagraph(&discovery.sources, &IngestionConfig::default(), None)?;
    println!("\n{} columns, fingerprint {}\n", graph.len(), &graph.workspace_fingerprint()[..12]);
    print!("{}", render_preview(&graph, 3));
    for d in graph.diagnostics() {
        eprintln!("{d}");
    }
    Ok(())
}
