//! Run configuration: defaults, presets, an optional TOML file and
//! command-line overrides, merged in that order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::executor::ExecutorConfig;
use crate::ingestion::IngestionConfig;
use crate::linkage::SimilarityConfig;
use crate::planner::PlannerConfig;
use crate::provider::{
    CascadePolicy, CassetteBackend, ChatBackend, HttpBackend, OfflineBackend, Provider,
    ProviderSettings, ENV_API_KEY, ENV_BASE_URL,
};
use crate::staging::ResourceLimits;
use crate::synthesis::SynthesisConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ProviderMode {
    Live,
    Replay,
    Record,
    /// The built-in deterministic analyst; no endpoint, no cassette.
    #[default]
    Offline,
}

impl FromStr for ProviderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(ProviderMode::Live),
            "replay" => Ok(ProviderMode::Replay),
            "record" => Ok(ProviderMode::Record),
            "offline" => Ok(ProviderMode::Offline),
            _ => Err(format!("unknown provider mode '{s}' (expected live, replay, record or offline)")),
        }
    }
}

impl fmt::Display for ProviderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderMode::Live => "LIVE",
            ProviderMode::Replay => "REPLAY",
            ProviderMode::Record => "RECORD",
            ProviderMode::Offline => "OFFLINE",
        })
    }
}

/// What a RECORD session forwards requests to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RecordSource {
    #[default]
    Live,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub cassette: Option<PathBuf>,
    pub record_source: RecordSource,
    pub timeout_secs: u64,
    pub policy: CascadePolicy,
    pub settings: ProviderSettings,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Offline,
            cassette: None,
            record_source: RecordSource::Live,
            timeout_secs: 120,
            policy: CascadePolicy::default(),
            settings: ProviderSettings::default(),
        }
    }
}

fn env_present(name: &str) -> bool {
    std::env::var(name).map(|v| !v.is_empty()).unwrap_or(false)
}

impl ProviderConfig {
    /// Checks the mode gates without touching the network.
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        let needs_endpoint = match self.mode {
            ProviderMode::Live => true,
            ProviderMode::Record => self.record_source == RecordSource::Live,
            _ => false,
        };
        match self.mode {
            ProviderMode::Replay => match &self.cassette {
                None => return Err(Error::Config("REPLAY mode needs --cassette <file>".into())),
                Some(p) if !p.is_file() => {
                    return Err(Error::Config(format!("REPLAY cassette {} does not exist", p.display())))
                }
                Some(_) => {}
            },
            ProviderMode::Record if self.cassette.is_none() => {
                return Err(Error::Config("RECORD mode needs --cassette <file> to write to".into()))
            }
            _ => {}
        }
        if needs_endpoint {
            for var in [ENV_API_KEY, ENV_BASE_URL] {
                if !env_present(var) {
                    return Err(Error::Config(format!(
                        "{} mode calls a live endpoint; set {ENV_API_KEY} and {ENV_BASE_URL} ({var} is missing)",
                        self.mode
                    )));
                }
            }
        }
        Ok(())
    }

    /// Builds the provider. In RECORD mode the cassette backend is returned
    /// as well so the caller can save it when the run ends.
    pub fn build(&self) -> Result<(Provider, Option<Arc<CassetteBackend>>)> {
        self.validate()?;
        let timeout = Duration::from_secs(self.timeout_secs.max(1));
        let live = || -> Result<Arc<dyn ChatBackend>> { Ok(Arc::new(HttpBackend::from_env(timeout)?)) };
        let (backend, recorder): (Arc<dyn ChatBackend>, _) = match self.mode {
            ProviderMode::Offline => (Arc::new(OfflineBackend::new()), None),
            ProviderMode::Live => (live()?, None),
            ProviderMode::Replay => {
                let path = self.cassette.as_deref().expect("validated");
                (Arc::new(CassetteBackend::replay_file(path)?), None)
            }
            ProviderMode::Record => {
                let inner: Arc<dyn ChatBackend> = match self.record_source {
                    RecordSource::Live => live()?,
                    RecordSource::Offline => Arc::new(OfflineBackend::new()),
                };
                let recorder = Arc::new(CassetteBackend::record(inner));
                (recorder.clone() as Arc<dyn ChatBackend>, Some(recorder))
            }
        };
        Ok((Provider::new(backend, self.policy.clone(), self.settings.clone()), recorder))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    InsightMax,
    SummaryMax,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::InsightMax => "insight-max",
            Preset::SummaryMax => "summary-max",
        }
    }

    pub fn apply(self, config: &mut RunConfig) {
        let (temperature, questions, depth, samples) = match self {
            Preset::InsightMax => (1.0, 4, 4, config.planner.samples),
            Preset::SummaryMax => (0.3, 3, 3, 5),
        };
        config.provider.settings.default_temperature = temperature;
        config.planner.max_questions = questions;
        config.planner.branch_depth = depth;
        config.planner.samples = samples;
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "insight-max" => Ok(Preset::InsightMax),
            "summary-max" => Ok(Preset::SummaryMax),
            _ => Err(format!("unknown preset '{s}' (expected insight-max or summary-max)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub workspace: PathBuf,
    pub out_dir: PathBuf,
    pub goal: String,
    pub preset: Option<Preset>,
    pub ingestion: IngestionConfig,
    pub similarity: SimilarityConfig,
    pub planner: PlannerConfig,
    pub executor: ExecutorConfig,
    pub limits: ResourceLimits,
    pub synthesis: SynthesisConfig,
    pub provider: ProviderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            workspace: PathBuf::from("."),
            out_dir: PathBuf::from("out"),
            goal: String::new(),
            preset: None,
            ingestion: IngestionConfig::default(),
            similarity: SimilarityConfig::default(),
            planner: PlannerConfig::default(),
            executor: ExecutorConfig::default(),
            limits: ResourceLimits::default(),
            synthesis: SynthesisConfig::default(),
            provider: ProviderConfig::default(),
        }
    }
}

/// Values given on the command line. `None` means the flag was absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub workspace: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub goal: Option<String>,
    pub preset: Option<Preset>,
    pub provider_mode: Option<ProviderMode>,
    pub cassette: Option<PathBuf>,
    pub theta: Option<f64>,
    pub w_n: Option<f64>,
    pub w_v: Option<f64>,
    pub k: Option<usize>,
    pub max_retries: Option<usize>,
    pub seed: Option<u64>,
}

fn merge(base: &mut toml::Value, file: toml::Value) {
    match (base, file) {
        (toml::Value::Table(b), toml::Value::Table(f)) => {
            for (key, value) in f {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

impl RunConfig {
    /// Defaults, then the preset (flag first, else the file's), then the
    /// file's explicit values, then the flags.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let file_value = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(Error::io(format!("reading {}", path.display())))?;
                Some(
                    text.parse::<toml::Table>()
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
                )
            }
            None => None,
        };
        let preset = match flags.preset {
            Some(p) => Some(p),
            None => match file_value.as_ref().and_then(|t| t.get("preset")) {
                Some(v) => Some(
                    v.as_str()
                        .ok_or_else(|| Error::Config("preset must be a string".into()))?
                        .parse()
                        .map_err(Error::Config)?,
                ),
                None => None,
            },
        };
        let mut config = RunConfig::default();
        if let Some(p) = preset {
            p.apply(&mut config);
            config.preset = Some(p);
        }
        if let Some(table) = file_value {
            let mut base = toml::Value::try_from(&config).map_err(|e| Error::Config(e.to_string()))?;
            merge(&mut base, toml::Value::Table(table));
            config = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
            config.preset = preset;
        }
        config.apply(flags);
        Ok(config)
    }

    pub fn apply(&mut self, flags: &Overrides) {
        if let Some(v) = &flags.workspace {
            self.workspace = v.clone();
        }
        if let Some(v) = &flags.out_dir {
            self.out_dir = v.clone();
        }
        if let Some(v) = &flags.goal {
            self.goal = v.clone();
        }
        if let Some(v) = flags.provider_mode {
            self.provider.mode = v;
        }
        if let Some(v) = &flags.cassette {
            self.provider.cassette = Some(v.clone());
        }
        if let Some(v) = flags.theta {
            self.similarity.theta = v;
        }
        if let Some(v) = flags.w_n {
            self.similarity.w_n = v;
        }
        if let Some(v) = flags.w_v {
            self.similarity.w_v = v;
        }
        if let Some(v) = flags.k {
            self.similarity.k = v;
        }
        if let Some(v) = flags.max_retries {
            self.executor.max_retries = v;
        }
        if let Some(v) = flags.seed {
            self.ingestion.seed = v;
        }
    }

    /// Everything except the provider gates, which [`ProviderConfig::validate`] owns.
    pub fn validate(&self) -> Result<()> {
        self.similarity.validate()?;
        self.planner.validate()?;
        if !(0.0..=1.0).contains(&self.ingestion.type_inference_threshold) {
            return Err(Error::Config("ingestion.type_inference_threshold must lie in [0, 1]".into()));
        }
        if self.ingestion.sample_cap == 0 {
            return Err(Error::Config("ingestion.sample_cap must be at least 1".into()));
        }
        let t = self.provider.settings.default_temperature;
        if !(0.0..=self.provider.settings.max_temperature).contains(&t) {
            return Err(Error::Config(format!("temperature {t} is outside [0, {}]", self.provider.settings.max_temperature)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_set_their_knobs() {
        let c = RunConfig::resolve(None, &Overrides { preset: Some(Preset::InsightMax), ..Default::default() }).unwrap();
        assert_eq!(c.provider.settings.default_temperature, 1.0);
        assert_eq!((c.planner.max_questions, c.planner.branch_depth), (4, 4));
        let c = RunConfig::resolve(None, &Overrides { preset: Some(Preset::SummaryMax), ..Default::default() }).unwrap();
        assert_eq!(c.provider.settings.default_temperature, 0.3);
        assert_eq!((c.planner.max_questions, c.planner.branch_depth, c.planner.samples), (3, 3, 5));
    }

    #[test]
    fn file_fills_absent_flags_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "goal = \"from file\"\npreset = \"insight-max\"\n[similarity]\ntheta = 0.7\nk = 2\n[planner]\nbranch_depth = 2\n",
        )
        .unwrap();
        let flags = Overrides { k: Some(7), ..Default::default() };
        let c = RunConfig::resolve(Some(&path), &flags).unwrap();
        assert_eq!(c.goal, "from file");
        assert_eq!(c.similarity.theta, 0.7);
        assert_eq!(c.similarity.k, 7);
        assert_eq!(c.similarity.w_n, 0.6);
        assert_eq!(c.planner.branch_depth, 2);
        assert_eq!(c.planner.max_questions, 4);
        assert_eq!(c.preset, Some(Preset::InsightMax));
    }

    #[test]
    fn bad_theta_is_rejected() {
        let c = RunConfig::resolve(None, &Overrides { theta: Some(1.01), ..Default::default() }).unwrap();
        assert!(matches!(c.validate(), Err(Error::Similarity(_))));
    }

    #[test]
    fn replay_needs_an_existing_cassette() {
        let mut p = ProviderConfig { mode: ProviderMode::Replay, ..Default::default() };
        assert!(p.validate().is_err());
        p.cassette = Some(PathBuf::from("/definitely/not/here.json"));
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("does not exist"), "{err}");
    }

    #[test]
    fn modes_parse_case_insensitively() {
        assert_eq!("REPLAY".parse::<ProviderMode>().unwrap(), ProviderMode::Replay);
        assert_eq!("offline".parse::<ProviderMode>().unwrap(), ProviderMode::Offline);
        assert!("cloud".parse::<ProviderMode>().is_err());
    }
}
