#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use unilink::config::{Overrides, ProviderMode, RunConfig};
use unilink::ingestion::{SampleSet, SourceFormat, UnifiedType};
use unilink::metagraph::{Alias, ColumnMeta, ColumnRole, MetaGraph, SourceRef};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn demo_dir() -> PathBuf {
    data_dir().join("demo")
}

pub fn fixture_specs() -> Vec<PathBuf> {
    let mut specs: Vec<PathBuf> = std::fs::read_dir(data_dir().join("fixtures"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    specs.sort();
    specs.push(demo_dir().join("fixture.toml"));
    specs
}

/// The demo run configuration in REPLAY mode against the shipped cassette.
pub fn demo_replay_config(out: &Path) -> RunConfig {
    let flags = Overrides {
        workspace: Some(demo_dir().join("workspace")),
        out_dir: Some(out.to_path_buf()),
        provider_mode: Some(ProviderMode::Replay),
        cassette: Some(demo_dir().join("demo.cassette.json")),
        ..Default::default()
    };
    RunConfig::resolve(Some(&demo_dir().join("record.toml")), &flags).unwrap()
}

pub fn samples(values: &[&str]) -> SampleSet {
    SampleSet { values: values.iter().map(|s| s.to_string()).collect(), sampled_from: values.len(), cap: 1000 }
}

pub fn column(alias: &str, ty: UnifiedType, values: &[&str]) -> ColumnMeta {
    let alias: Alias = alias.parse().unwrap();
    ColumnMeta {
        origin: SourceRef { source_id: alias.source.clone(), format: alias.format, path: "mem".into() },
        role: if alias.format == SourceFormat::Text { ColumnRole::Pseudo } else { ColumnRole::Data },
        alias,
        unified_type: ty,
        samples: samples(values),
    }
}

pub fn graph(columns: Vec<ColumnMeta>) -> MetaGraph {
    MetaGraph::from_columns(columns, BTreeMap::new(), String::new(), Vec::new()).unwrap()
}

/// Fact/dimension key names and id prefixes used to plant joins.
pub const KEY_PAIRS: &[(&str, &str, &str)] = &[
    ("daily_summary.region_id", "regions.region_code", "R"),
    ("store_daily.store_id", "stores.store_code", "S"),
    ("orders_daily.customer_id", "customers.cust_id", "C"),
    ("sessions.user_id", "users.uid", "U"),
    ("daily_kpis.account_region", "regions.region_code", "A"),
    ("shop_metrics.shop_ref", "shops.shop_key", "K"),
    ("branch_daily.branch", "branches.branch_id", "B"),
    ("daily_usage.tenant_id", "tenants.tenant_code", "T"),
];

pub const OVERLAPS: &[f64] = &[0.8, 0.85, 0.9, 1.0];

/// A fixture spec planting one join, varied by seed.
pub fn planted_join_spec(seed: u64) -> String {
    let (left, right, prefix) = KEY_PAIRS[seed as usize % KEY_PAIRS.len()];
    let overlap = OVERLAPS[seed as usize % OVERLAPS.len()];
    let entities = 10 + (seed % 3) * 5;
    let distractors = 10 + seed % 8;
    let formats = if seed % 2 == 0 { r#"["CSV", "SQL_DB", "JSON_DOC", "TEXT"]"# } else { r#"["CSV", "JSON_DOC", "TEXT"]"# };
    format!(
        r#"
seed = {seed}
scenario = "planted_join_{seed}"
formats = {formats}
start_date = "2023-03-01"
days = 40
entities = {entities}
entity_prefix = "{prefix}"
distractors = {distractors}

[[metrics]]
name = "daily_value"
label = "daily value"
base = 50.0
noise = 2.0
decimals = 2

[[insights]]
category = "TREND"
metric = "daily_value"
slope = 0.2

[[joins]]
left = "{left}"
right = "{right}"
overlap = {overlap}
"#
    )
}

pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
