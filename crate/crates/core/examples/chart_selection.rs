//! Picks chart types for result shapes and renders them as SVG.

use unilink::executor::{render_chart, select_chart, ResultSummary};
use unilink::ingestion::UnifiedType;
use unilink::staging::{Cell, QueryResult, ResultColumn};

fn result(columns: &[(&str, UnifiedType)], rows: Vec<Vec<Cell>>) -> QueryResult {
    QueryResult {
        columns: columns.iter().map(|(n, t)| ResultColumn { name: n.to_string(), unified_type: *t }).collect(),
        rows,
        truncated: false,
        diagnostics: Vec::new(),
    }
}

fn main() -> std::io::Result<()> {
    use UnifiedType::*;
    let out = std::env::temp_dir().join("unilink-charts");
    let cases = [
        (
            "What is the trend of conversion?",
            result(
                &[("log_date", Date), ("cvr", Float)],
                (1..=9).map(|d| vec![Cell::Text(format!("2024-03-0{d}")), Cell::Float(0.2 + d as f64 * 0.01)]).collect(),
            ),
        ),
        (
            "Compare revenue by region",
            result(
                &[("region", Text), ("revenue", Float)],
                vec![
                    vec![Cell::Text("north".into()), Cell::Float(120.0)],
                    vec![Cell::Text("south".into()), Cell::Float(80.5)],
                    vec![Cell::Text("west".into()), Cell::Float(99.0)],
                ],
            ),
        ),
        (
            "Is spend correlated with signups?",
            result(
                &[("spend", Float), ("signups", Int)],
                (1..=10).map(|i| vec![Cell::Float(i as f64 * 10.0), Cell::Int(i * 3 + i % 4)]).collect(),
            ),
        ),
        (
            "Sales by region and channel",
            result(
                &[("region", Text), ("channel", Text), ("sales", Float)],
                ["north", "south"]
                    .iter()
                    .flat_map(|r| ["web", "store"].map(|c| vec![Cell::Text(r.to_string()), Cell::Text(c.into()), Cell::Float(r.len() as f64 * c.len() as f64)]))
                    .collect(),
            ),
        ),
        ("How many refunds?", result(&[("n", Int)], Vec::new())),
    ];
    for (i, (question, rows)) in cases.into_iter().enumerate() {
        let summary = ResultSummary::from_result(&rows, 20);
        let spec = select_chart(&summary, question);
        let columns: Vec<String> = rows.columns.iter().map(|c| c.name.clone()).collect();
        let path = out.join(format!("{i}.svg"));
        render_chart(&spec, &columns, &rows.rows, &path)?;
        println!("{question:36} -> {:?} {}", spec.chart_type, spec.notice.as_deref().unwrap_or(""));
    }
    println!("charts written to {}", out.display());
    Ok(())
}
