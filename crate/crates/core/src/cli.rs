//! Command-line front end. Exit codes: 0 success, 1 the command ran but
//! something it checked failed, 2 configuration or input error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, Preset, ProviderMode, RunConfig};
use crate::fixtures::{generate_workspace, verify_workspace, FixtureSpec, GroundTruth};
use crate::ingestion::discover_sources;
use crate::linkage::{build_entity_graph, formulate_hints};
use crate::metagraph::{build_metagraph, render_preview};
use crate::pipeline::{analyze, AnalyzeOptions};
use crate::synthesis::{score_insights, LexicalJudge};
use crate::{Error, Result};

pub const WORKSPACE_DIR: &str = "workspace";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Parser)]
#[command(name = "unilink", version, about = "Join-key discovery and goal-driven analysis over mixed-format data folders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print every discovered column with its type and sample values.
    Inspect(RunArgs),
    /// Print the join hints discovered between sources.
    Link {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the full entity graph as JSON.
        #[arg(long)]
        dump_graph: Option<PathBuf>,
    },
    /// Plan, query and report on a goal.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Print plan.json on stdout as well.
        #[arg(long)]
        dump_plan: bool,
        /// Keep the staging store as <out>/staging.db.
        #[arg(long)]
        persist_staging: bool,
    },
    /// Generate a workspace with planted insights from a fixture spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a generated workspace against its ground truth.
    Verify {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
    },
    /// Score predicted insights against ground truth with the lexical judge.
    Score {
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long)]
        predicted: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    workspace: Option<PathBuf>,
    #[arg(long)]
    goal: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    provider_mode: Option<ProviderMode>,
    #[arg(long)]
    cassette: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    wn: Option<f64>,
    #[arg(long)]
    wv: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_retries: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file supplying values for flags that are not given.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let flags = Overrides {
            workspace: self.workspace.clone(),
            out_dir: self.out.clone(),
            goal: self.goal.clone(),
            preset: self.preset,
            provider_mode: self.provider_mode,
            cassette: self.cassette.clone(),
            theta: self.theta,
            w_n: self.wn,
            w_v: self.wv,
            k: self.k,
            max_retries: self.max_retries,
            seed: self.seed,
        };
        let config = RunConfig::resolve(self.config.as_deref(), &flags)?;
        config.validate()?;
        Ok(config)
    }
}

/// Entry point for the binary.
pub fn run() -> ExitCode {
    ExitCode::from(run_from(std::env::args_os()) as u8)
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Inspect(run) => inspect(&run.resolve()?),
        Command::Link { run, dump_graph } => link(&run.resolve()?, dump_graph.as_deref()),
        Command::Analyze { run, dump_plan, persist_staging } => {
            let outcome = analyze(&run.resolve()?, &AnalyzeOptions { dump_plan, persist_staging })?;
            let answered = outcome.plan.subquestions().filter(|n| n.answer.is_some()).count();
            eprintln!(
                "{} question(s) answered, {} failed; report written to {}",
                answered,
                outcome.failed_nodes(),
                outcome.out_dir.join("report.md").display()
            );
            Ok(outcome.exit_code())
        }
        Command::Synth { spec, out } => synth(&spec, &out),
        Command::Verify { workspace, ground_truth } => {
            let truth = GroundTruth::load(&ground_truth)?;
            let report = verify_workspace(&workspace, &truth);
            print!("{}", report.render());
            Ok(if report.all_passed() { 0 } else { 1 })
        }
        Command::Score { ground_truth, predicted } => score(&ground_truth, &predicted),
    }
}

fn inspect(config: &RunConfig) -> Result<i32> {
    let discovery = discover_sources(&config.workspace)?;
    if discovery.sources.is_empty() {
        println!("no sources found in {}", config.workspace.display());
        return Ok(0);
    }
    let graph = build_metagraph(&discovery.sources, &config.ingestion, None)?;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(render_preview(&graph, 3).as_bytes());
    for d in graph.diagnostics() {
        eprintln!("{d}");
    }
    Ok(0)
}

fn link(config: &RunConfig, dump_graph: Option<&Path>) -> Result<i32> {
    let discovery = discover_sources(&config.workspace)?;
    if discovery.sources.is_empty() {
        println!("no sources found in {}", config.workspace.display());
        return Ok(0);
    }
    let graph = build_metagraph(&discovery.sources, &config.ingestion, None)?;
    let entity = build_entity_graph(&graph, &config.similarity)?;
    println!("{}", formulate_hints(&entity, config.similarity.k));
    if let Some(path) = dump_graph {
        std::fs::write(path, entity.to_json()).map_err(Error::io(format!("writing {}", path.display())))?;
    }
    Ok(0)
}

fn synth(spec: &Path, out: &Path) -> Result<i32> {
    let spec = FixtureSpec::load(spec)?;
    let truth = generate_workspace(&spec, &out.join(WORKSPACE_DIR))?;
    truth.save(&out.join(GROUND_TRUTH_FILE))?;
    println!(
        "wrote {} with {} planted insight(s) and {} planted join(s)",
        out.join(WORKSPACE_DIR).display(),
        truth.insights.len(),
        truth.joins.len()
    );
    Ok(0)
}

/// Insight statements from a JSON file holding an `insights` array (ground
/// truth or a report) or a bare array, else one statement per line.
pub fn load_statements(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(Error::io(format!("reading {}", path.display())))?;
    let statement = |v: &serde_json::Value| -> Option<String> {
        v.as_str().or_else(|| v.get("statement").and_then(|s| s.as_str())).map(str::to_string)
    };
    match serde_json::from_str::<serde_json::Value>(&text) {
        Ok(value) => {
            let items = value.get("insights").unwrap_or(&value);
            let array = items
                .as_array()
                .ok_or_else(|| Error::Config(format!("{}: expected an insights array", path.display())))?;
            array
                .iter()
                .map(|v| statement(v).ok_or_else(|| Error::Config(format!("{}: insight without a statement", path.display()))))
                .collect()
        }
        Err(_) => Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()),
    }
}

fn score(ground_truth: &Path, predicted: &Path) -> Result<i32> {
    let gt = load_statements(ground_truth)?;
    let pred = load_statements(predicted)?;
    let report = score_insights(&gt, &pred, &|a: &str, b: &str| Ok(LexicalJudge::f1(a, b)))?;
    for (i, (m, best)) in report.maxima.iter().zip(&report.best_match).enumerate() {
        let matched = best.map_or("-".to_string(), |b| format!("#{b}"));
        println!("ground truth #{i}: best {m:.4} from prediction {matched}");
    }
    println!("mean {:.4}", report.mean);
    Ok(0)
}
