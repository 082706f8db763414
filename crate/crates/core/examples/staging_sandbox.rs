//! Loads a workspace into the read-only staging store, runs a join query and
//! shows that writes are refused.

use std::path::PathBuf;

use unilink::executor::display_cell;
use unilink::ingestion::{discover_sources, IngestionConfig};
use unilink::metagraph::build_metagraph;
use unilink::staging::{materialize, ResourceLimits};

fn main() -> unilink::Result<()> {
    let workspace = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/workspaces/retail");
    let discovery = discover_sources(&workspace)?;
    let graph = build_metagraph(&discovery.sources, &IngestionConfig::default(), None)?;
    let store = materialize(&discovery.sources, &graph, &ResourceLimits::default())?;

    println!("{}\n", store.schema_text());
    println!("{}\n", store.alias_mapping_text());

    let (orders, customer) = store.locate(&"csv.orders.customer_id".parse().unwrap()).expect("staged");
    let (customers, _) = store.locate(&"sqlite.crm.customers.customer_id".parse().unwrap()).expect("staged");
    let sql = format!(
        "SELECT c.segment, ROUND(SUM(o.amount), 2) AS revenue FROM \"{orders}\" o \
         JOIN \"{customers}\" c ON o.\"{customer}\" = c.customer_id GROUP BY 1 ORDER BY 2 DESC"
    );
    let result = store.execute_query(&sql)?;
    println!("{sql}");
    for row in &result.rows {
        println!("  {}", row.iter().map(display_cell).collect::<Vec<_>>().join(" | "));
    }

    for attempt in [format!("DELETE FROM \"{orders}\""), "SELECT 1; DROP TABLE x".into(), "PRAGMA query_only = OFF".into()] {
        match store.validate(&attempt) {
            Ok(()) => println!("accepted?! {attempt}"),
            Err(e) => println!("refused: {attempt}\n  {}", e.engine_message()),
        }
    }
    Ok(())
}
