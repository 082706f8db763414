//! Generates a workspace with planted insights from a fixture spec and
//! verifies it against the ground truth.
//!
//! cargo run --example synth_fixture -- [spec.toml] [out-dir]

use std::path::PathBuf;

use unilink::fixtures::{generate_workspace, verify_workspace, FixtureSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let spec_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/fixtures/store_basket.toml"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("unilink-fixture"));
    let spec = FixtureSpec::load(&spec_path)?;
    let truth = generate_workspace(&spec, &out)?;
    println!("wrote {}", out.display());
    for j in &truth.joins {
        println!("planted join {} = {} (overlap {})", j.left, j.right, j.overlap);
    }
    for i in &truth.insights {
        println!("planted insight: {}", i.statement);
    }
    print!("{}", verify_workspace(&out, &truth).render());
    Ok(())
}
