//! Shows the self-correction loop: two broken queries, then a working one.
//! After two consecutive failures the cascade escalates to the strong tier.

use std::sync::Arc;

use unilink::executor::{run_with_selfcorrection, ExecutionContext, ExecutorConfig};
use unilink::ingestion::{discover_sources, IngestionConfig};
use unilink::metagraph::build_metagraph;
use unilink::provider::{tags, CascadePolicy, CascadeSession, Provider, ProviderSettings, ScriptedBackend};
use unilink::staging::{materialize, ResourceLimits};

fn main() -> unilink::Result<()> {
    let dir = std::env::temp_dir().join(format!("unilink-selfcorrect-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(unilink::Error::io("creating workspace"))?;
    std::fs::write(dir.join("sales.csv"), "user_id,amount\nu1,3.5\nu2,4\nu3,1\n").map_err(unilink::Error::io("writing"))?;
    let discovery = discover_sources(&dir)?;
    let graph = build_metagraph(&discovery.sources, &IngestionConfig::default(), None)?;
    let store = materialize(&discovery.sources, &graph, &ResourceLimits::default())?;

    let scripted = Arc::new(ScriptedBackend::new());
    scripted.push(tags::CODEGEN, "SELECT usr_id FROM csv_sales");
    scripted.push(tags::CODEGEN, "SELECT amount FROM csv_saless");
    scripted.push(tags::CODEGEN, "```sql\nSELECT user_id, amount FROM csv_sales ORDER BY amount DESC\n```");
    let provider = Provider::new(scripted.clone(), CascadePolicy::default(), ProviderSettings::default());
    let ctx = ExecutionContext {
        schema: store.schema_text(),
        hints: String::new(),
        alias_mapping: store.alias_mapping_text(),
    };
    let run = run_with_selfcorrection(
        "Who spent the most?",
        "spending",
        &store,
        &ctx,
        &provider,
        &CascadeSession::new(),
        &ExecutorConfig::default(),
    );
    for a in &run.attempts {
        println!("attempt {} [{:?}] {:?}: {}", a.attempt_index, a.tier, a.outcome, a.program);
        if !a.engine_message.is_empty() {
            println!("    {}", a.engine_message);
        }
    }
    let prompts = scripted.prompts();
    println!("\nthe retry prompt carried the previous error:\n{}", prompts.last().map(String::as_str).unwrap_or(""));
    let _ = std::fs::remove_dir_all(dir);
    Ok(())
}
