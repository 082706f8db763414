//! Records provider traffic into a cassette and replays it without a backend.
//!
//! cargo run --example cassette_record_replay
//! cargo run --example cassette_record_replay -- --regenerate-demo
//!
//! The second form re-records the demo cassette that the replay tests use,
//! with the built-in offline analyst standing in for a live endpoint.

use std::path::PathBuf;
use std::sync::Arc;

use unilink::config::RunConfig;
use unilink::pipeline::{analyze, AnalyzeOptions};
use unilink::provider::{tags, CascadePolicy, CascadeSession, CassetteBackend, Provider, ProviderSettings, ScriptedBackend};

fn regenerate_demo() -> unilink::Result<()> {
    let demo = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/demo");
    let mut config = RunConfig::resolve(Some(&demo.join("record.toml")), &Default::default())?;
    config.workspace = demo.join("workspace");
    config.provider.cassette = Some(demo.join("demo.cassette.json"));
    let out = tempfile_dir();
    config.out_dir = out.clone();
    let outcome = analyze(&config, &AnalyzeOptions::default())?;
    println!(
        "recorded {} with {} answered question(s)",
        demo.join("demo.cassette.json").display(),
        outcome.plan.subquestions().filter(|n| n.answer.is_some()).count()
    );
    let _ = std::fs::remove_dir_all(out);
    Ok(())
}

fn tempfile_dir() -> PathBuf {
    std::env::temp_dir().join(format!("unilink-demo-{}", std::process::id()))
}

fn main() -> unilink::Result<()> {
    if std::env::args().any(|a| a == "--regenerate-demo") {
        return regenerate_demo();
    }
    let scripted = Arc::new(ScriptedBackend::new());
    scripted.push(tags::OBSERVE, "Revenue peaks on Saturdays.");
    scripted.push(tags::OBSERVE, "North leads every quarter.");

    let recorder = Arc::new(CassetteBackend::record(scripted));
    let provider = Provider::new(recorder.clone(), CascadePolicy::default(), ProviderSettings::default());
    let session = CascadeSession::new();
    let prompts = ["When does revenue peak?", "Which region leads?"];
    for p in prompts {
        let done = provider.complete(&provider.request(tags::OBSERVE, "You are terse.", p), &session)?;
        println!("live   {p:28} -> {}", done.text);
    }
    let path = std::env::temp_dir().join("unilink-example.cassette.json");
    recorder.save(&path)?;

    let replay = Provider::new(
        Arc::new(CassetteBackend::replay_file(&path)?),
        CascadePolicy::default(),
        ProviderSettings::default(),
    );
    for p in prompts {
        let done = replay.complete(&replay.request(tags::OBSERVE, "You are terse.", p), &CascadeSession::new())?;
        println!("replay {p:28} -> {}", done.text);
    }
    let miss = replay.complete(&replay.request(tags::OBSERVE, "You are terse.", "Unrecorded?"), &CascadeSession::new());
    println!("unrecorded prompt: {}", miss.unwrap_err());
    let _ = std::fs::remove_file(path);
    Ok(())
}
