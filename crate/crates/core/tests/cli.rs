mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn unilink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unilink"))
        .args(args)
        .env_remove("LLM_API_KEY")
        .env_remove("LLM_BASE_URL")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn retail() -> std::path::PathBuf {
    data_dir().join("workspaces/retail")
}

#[test]
fn inspect_matches_the_golden_preview() {
    let ws = demo_dir().join("workspace");
    let o = unilink(&["inspect", "--workspace", s(&ws)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let golden = std::fs::read_to_string(data_dir().join("golden/inspect_demo.txt")).unwrap();
    assert_eq!(stdout(&o), golden);
}

#[test]
fn missing_workspace_is_a_config_error() {
    let o = unilink(&["inspect", "--workspace", "/does/not/exist"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: "));
}

#[test]
fn empty_workspace_reports_no_sources() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["inspect", "link"] {
        let o = unilink(&[cmd, "--workspace", s(dir.path())]);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).starts_with("no sources found in"), "{}", stdout(&o));
    }
}

#[test]
fn link_respects_k() {
    let all = unilink(&["link", "--workspace", s(&retail())]);
    assert_eq!(all.status.code(), Some(0));
    assert_eq!(
        stdout(&all),
        "You must JOIN ON: csv.orders.customer_id = sqlite.crm.customers.customer_id\n\
         You must JOIN ON: csv.orders.store_no = json.stores.stores.store_no\n"
    );
    let one = unilink(&["link", "--workspace", s(&retail()), "--k", "1"]);
    assert_eq!(stdout(&one).lines().count(), 1);
    assert!(stdout(&all).starts_with(&stdout(&one)));
}

#[test]
fn link_dumps_the_entity_graph() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("graph.json");
    let o = unilink(&["link", "--workspace", s(&retail()), "--dump-graph", s(&dump)]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&dump).unwrap()).unwrap();
    assert!(v.is_object());
}

#[test]
fn out_of_range_theta_is_rejected() {
    let o = unilink(&["link", "--workspace", s(&retail()), "--theta", "1.01"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("theta"), "{}", stderr(&o));
}

#[test]
fn provider_gates_fail_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let ws = s(&retail()).to_string();
    let base = ["analyze", "--workspace", &ws, "--out", s(&out), "--goal", "Which store sells most?"];

    let mut replay = base.to_vec();
    replay.extend(["--provider-mode", "replay", "--cassette", "/missing/cassette.json"]);
    let o = unilink(&replay);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));

    let mut live = base.to_vec();
    live.extend(["--provider-mode", "live"]);
    let o = unilink(&live);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("LLM_API_KEY"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn analyze_needs_a_goal() {
    let dir = tempfile::tempdir().unwrap();
    let o = unilink(&["analyze", "--workspace", s(&retail()), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("goal"));
}

#[test]
fn synth_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = data_dir().join("fixtures/store_basket.toml");
    let o = unilink(&["synth", "--spec", s(&spec), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = unilink(&[
        "verify",
        "--workspace",
        s(&dir.path().join("workspace")),
        "--ground-truth",
        s(&dir.path().join("ground_truth.json")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn verify_fails_against_the_wrong_workspace() {
    let dir = tempfile::tempdir().unwrap();
    let spec = data_dir().join("fixtures/store_basket.toml");
    unilink(&["synth", "--spec", s(&spec), "--out", s(dir.path())]);
    let o = unilink(&[
        "verify",
        "--workspace",
        s(&demo_dir().join("workspace")),
        "--ground-truth",
        s(&dir.path().join("ground_truth.json")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn scoring_ground_truth_against_itself_is_perfect() {
    let gt = demo_dir().join("ground_truth.json");
    let o = unilink(&["score", "--ground-truth", s(&gt), "--predicted", s(&gt)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).trim_end().ends_with("mean 1.0000"), "{}", stdout(&o));
}

#[test]
fn scoring_with_empty_ground_truth_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"insights": []}"#).unwrap();
    let gt = demo_dir().join("ground_truth.json");
    let o = unilink(&["score", "--ground-truth", s(&empty), "--predicted", s(&gt)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_dir_inside_the_workspace_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    std::fs::create_dir(&ws).unwrap();
    std::fs::copy(retail().join("orders.csv"), ws.join("orders.csv")).unwrap();
    let o = unilink(&["analyze", "--workspace", s(&ws), "--out", s(&ws.join("out")), "--goal", "What sells?"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!ws.join("out").exists());
}

#[test]
fn no_command_touches_the_workspace() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    std::fs::create_dir(&ws).unwrap();
    for (name, bytes) in read_tree(&retail()) {
        std::fs::write(ws.join(name), bytes).unwrap();
    }
    let before = read_tree(&ws);
    let out = dir.path().join("out");
    for args in [
        vec!["inspect", "--workspace", s(&ws)],
        vec!["link", "--workspace", s(&ws)],
        vec!["analyze", "--workspace", s(&ws), "--out", s(&out), "--goal", "How do order amounts vary by store?", "--persist-staging"],
    ] {
        let o = unilink(&args);
        assert!(matches!(o.status.code(), Some(0) | Some(1)), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(read_tree(&ws), before);
    assert!(out.join("report.md").is_file());
    assert!(out.join("staging.db").is_file());
}

#[test]
fn dump_plan_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = unilink(&[
        "analyze",
        "--workspace",
        s(&retail()),
        "--out",
        s(&out),
        "--goal",
        "Which customers spend the most?",
        "--dump-plan",
        "--preset",
        "summary-max",
    ]);
    assert!(matches!(o.status.code(), Some(0) | Some(1)), "{}", stderr(&o));
    let printed: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("plan.json")).unwrap()).unwrap();
    assert_eq!(printed, saved);
}

#[test]
fn demo_replay_through_the_binary_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = unilink(&[
        "analyze",
        "--config",
        s(&demo_dir().join("record.toml")),
        "--workspace",
        s(&demo_dir().join("workspace")),
        "--provider-mode",
        "REPLAY",
        "--cassette",
        s(&demo_dir().join("demo.cassette.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lib_out = dir.path().join("lib");
    unilink::pipeline::analyze(&demo_replay_config(&lib_out), &Default::default()).unwrap();
    for f in ["report.md", "plan.json"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(lib_out.join(f)).unwrap(), "{f}");
    }
}
