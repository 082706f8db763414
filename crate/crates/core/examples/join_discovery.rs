//! Scores column pairs across sources and prints the join hints.
//!
//! cargo run --example join_discovery -- [workspace] [theta]

use std::path::PathBuf;

use unilink::ingestion::{discover_sources, IngestionConfig};
use unilink::linkage::{build_entity_graph, formulate_hints, SimilarityConfig};
use unilink::metagraph::build_metagraph;

fn main() -> unilink::Result<()> {
    let mut args = std::env::args().skip(1);
    let workspace = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/workspaces/retail"));
    let mut config = SimilarityConfig::default();
    if let Some(theta) = args.next() {
        config.theta = theta.parse().expect("theta must be a number");
    }
    let discovery = discover_sources(&workspace)?;
    let graph = build_metagraph(&discovery.sources, &IngestionConfig::default(), None)?;
    let entity = build_entity_graph(&graph, &config)?;

    println!("edges above theta = {}:", config.theta);
    let mut edges: Vec<_> = entity.edges.iter().collect();
    edges.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    for e in edges {
        let kind = if entity.is_context_edge(e) { "context" } else { "join" };
        println!("  {:.3}  name {:.3}  value {:.3}  {kind:7}  {} ~ {}", e.weight, e.name_component, e.value_component, e.a, e.b);
    }
    println!("\n{}", formulate_hints(&entity, config.k));
    Ok(())
}
