//! Deterministic multi-source workspaces with planted insights and joins.
//!
//! A fixture is one fact table (CSV) of `days x entities` rows, an entity
//! dimension table (SQLite, or a JSON collection when no database is
//! requested), a JSON document of company events and a plain-text metric
//! guide. Planted insights shape the metric columns; distractor columns are
//! independent seeded noise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::executor::pearson;
use crate::ingestion::SourceFormat;
use crate::metagraph::Alias;
use crate::synthesis::InsightCategory;

pub const SQL_FILE: &str = "crm.db";
pub const EVENTS_FILE: &str = "company_events.json";
pub const GUIDE_FILE: &str = "metrics_guide.txt";
pub const EVENTS_COLLECTION: &str = "company_periods";

/// Fixture-level contracts of the statistical checks.
pub const MIN_ABS_R: f64 = 0.3;
pub const SE_BOUND: f64 = 3.0;
pub const JOIN_SLACK: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("invalid fixture spec: {0}")]
    Invalid(String),
    #[error("planted {category} on {metric} is not discoverable at this seed: {detail}")]
    Undiscoverable { category: &'static str, metric: String, detail: String },
    #[error("cannot parse fixture spec {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("sqlite: {0}")]
    Sql(#[from] rusqlite::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> FixtureError {
    let context = context.into();
    move |source| FixtureError::Io { context, source }
}

fn invalid(msg: impl Into<String>) -> FixtureError {
    FixtureError::Invalid(msg.into())
}

/// A numeric parameter given directly or read from the entity profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Value(f64),
    Profile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    #[default]
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub name: String,
    /// Human name used in the metric guide.
    #[serde(default)]
    pub label: Option<String>,
    pub base: Param,
    pub noise: f64,
    #[serde(default = "default_decimals")]
    pub decimals: usize,
}

fn default_decimals() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "category", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum PlantedInsight {
    /// Linear drift of `slope` per day.
    Trend { metric: String, slope: f64 },
    /// Entity `group` sits `gap` above the mean of the others.
    Comparison { metric: String, group: usize, gap: f64 },
    /// Row (`day`, `group`) exceeds every other row by `margin`.
    Extreme {
        metric: String,
        day: usize,
        group: usize,
        margin: f64,
        #[serde(default)]
        direction: Direction,
    },
    /// `metric += sign * effect * driver`, with the driver drawn uniformly
    /// from `[driver_min, driver_max]` (times `driver_scale` when given).
    Attribution {
        metric: String,
        driver: String,
        driver_min: f64,
        driver_max: f64,
        #[serde(default)]
        driver_scale: Option<String>,
        effect: Param,
        sign: f64,
    },
}

impl PlantedInsight {
    pub fn category(&self) -> InsightCategory {
        match self {
            Self::Trend { .. } => InsightCategory::Trend,
            Self::Comparison { .. } => InsightCategory::Comparison,
            Self::Extreme { .. } => InsightCategory::Extreme,
            Self::Attribution { .. } => InsightCategory::Attribution,
        }
    }

    pub fn metric(&self) -> &str {
        match self {
            Self::Trend { metric, .. }
            | Self::Comparison { metric, .. }
            | Self::Extreme { metric, .. }
            | Self::Attribution { metric, .. } => metric,
        }
    }
}

/// `left` is `fact_table.column`, `right` is `dimension_table.column`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedJoin {
    pub left: String,
    pub right: String,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSpec {
    pub seed: u64,
    pub scenario: String,
    #[serde(default = "all_formats")]
    pub formats: Vec<SourceFormat>,
    pub start_date: String,
    pub days: usize,
    pub entities: usize,
    #[serde(default = "default_prefix")]
    pub entity_prefix: String,
    #[serde(default = "default_fact")]
    pub fact_table: String,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_entity_column")]
    pub entity_column: String,
    #[serde(default = "default_dimension")]
    pub dimension_table: String,
    #[serde(default = "default_dimension_key")]
    pub dimension_key: String,
    #[serde(default)]
    pub distractors: usize,
    pub metrics: Vec<MetricSpec>,
    #[serde(default)]
    pub insights: Vec<PlantedInsight>,
    #[serde(default)]
    pub joins: Vec<PlantedJoin>,
}

fn all_formats() -> Vec<SourceFormat> {
    SourceFormat::ALL.to_vec()
}
fn default_prefix() -> String {
    "R".into()
}
fn default_fact() -> String {
    "daily_summary".into()
}
fn default_date_column() -> String {
    "log_date".into()
}
fn default_entity_column() -> String {
    "region_id".into()
}
fn default_dimension() -> String {
    "regions".into()
}
fn default_dimension_key() -> String {
    "region_code".into()
}

pub const PROFILE_FIELDS: [&str; 4] = ["base_cvr", "base_ad_spend", "covid_sensitivity", "ad_spend_effect"];

/// Per-entity parameters, drawn in the order listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityProfile {
    pub id: String,
    pub name: String,
    pub base_cvr: f64,
    pub base_ad_spend: f64,
    pub covid_sensitivity: f64,
    pub ad_spend_effect: f64,
}

impl EntityProfile {
    pub fn field(&self, name: &str) -> Option<f64> {
        match name {
            "base_cvr" => Some(self.base_cvr),
            "base_ad_spend" => Some(self.base_ad_spend),
            "covid_sensitivity" => Some(self.covid_sensitivity),
            "ad_spend_effect" => Some(self.ad_spend_effect),
            _ => None,
        }
    }
}

fn draw_profile<R: Rng>(rng: &mut R, i: usize, prefix: &str) -> EntityProfile {
    let letter = (b'A' + (i % 26) as u8) as char;
    let name = if i < 26 { format!("Region-{letter}") } else { format!("Region-{letter}{}", i / 26) };
    EntityProfile {
        id: format!("{prefix}{}", 1000 + i),
        name,
        base_cvr: rng.gen_range(0.4..0.60),
        base_ad_spend: rng.gen_range(800.0..4500.0),
        covid_sensitivity: rng.gen_range(0.0009..0.0022),
        ad_spend_effect: rng.gen_range(0.00002..0.00005),
    }
}

#[derive(Clone, Copy)]
enum Gen {
    Code(&'static str, u32),
    Uniform(f64, f64, usize),
    Gauss(f64, f64, usize),
    Int(i64, i64),
    Flag,
    Pick(&'static [&'static str]),
    Version,
}

const DISTRACTORS: &[(&str, Gen)] = &[
    ("campaign_id", Gen::Code("CMP-", 400)),
    ("weather_index", Gen::Uniform(0.0, 1.0, 3)),
    ("temperature_c", Gen::Gauss(18.0, 7.0, 1)),
    ("page_load_ms", Gen::Gauss(850.0, 120.0, 0)),
    ("bounce_rate", Gen::Uniform(0.2, 0.7, 4)),
    ("mobile_share", Gen::Uniform(0.3, 0.8, 4)),
    ("session_count", Gen::Int(200, 5000)),
    ("avg_order_value", Gen::Gauss(62.0, 15.0, 2)),
    ("support_tickets", Gen::Int(0, 40)),
    ("promo_flag", Gen::Flag),
    ("channel", Gen::Pick(&["search", "social", "email", "display", "affiliate"])),
    ("app_version", Gen::Version),
    ("newsletter_signups", Gen::Int(0, 120)),
    ("inventory_level", Gen::Int(1000, 20000)),
    ("browser", Gen::Pick(&["chrome", "safari", "firefox", "edge"])),
    ("email_open_rate", Gen::Uniform(0.1, 0.45, 4)),
    ("cart_abandon_rate", Gen::Uniform(0.5, 0.85, 4)),
    ("review_score", Gen::Uniform(1.0, 5.0, 1)),
    ("shipping_days", Gen::Int(1, 9)),
    ("competitor_price_index", Gen::Gauss(100.0, 8.0, 2)),
    ("social_mentions", Gen::Int(0, 900)),
    ("warehouse_code", Gen::Code("WH-", 12)),
];

pub fn distractor_catalogue() -> Vec<&'static str> {
    DISTRACTORS.iter().map(|d| d.0).collect()
}

fn draw_distractor<R: Rng>(rng: &mut R, g: Gen) -> String {
    match g {
        Gen::Code(prefix, n) => format!("{prefix}{:04}", rng.gen_range(0..n)),
        Gen::Uniform(lo, hi, d) => format!("{:.*}", d, rng.gen_range(lo..hi)),
        Gen::Gauss(m, s, d) => format!("{:.*}", d, Normal::new(m, s).unwrap().sample(rng)),
        Gen::Int(lo, hi) => rng.gen_range(lo..=hi).to_string(),
        Gen::Flag => (if rng.gen_bool(0.3) { "true" } else { "false" }).to_string(),
        Gen::Pick(options) => options.choose(rng).unwrap().to_string(),
        Gen::Version => format!("v2.{}.{}", rng.gen_range(0..10), rng.gen_range(0..20)),
    }
}

const EVENTS: &[(&str, &str, &str, i64, i64, &str)] = &[
    ("hol", "Holiday Sale", "Marketing", -120, -90, "Seasonal discount campaign across all channels."),
    ("invest", "Investment Period", "Financial", -30, 60, "Period of increased spending on acquisition."),
    ("budget", "Budget Cut Period", "Financial", 61, 90, "A short period of reduced expenditure."),
    ("brand", "Brand Refresh", "Marketing", 20, 35, "New visual identity rolled out on the storefront."),
    ("audit", "Annual Audit", "Compliance", 100, 130, "External audit of financial controls."),
];

fn round_to(x: f64, decimals: usize) -> f64 {
    let p = 10f64.powi(decimals as i32);
    (x * p).round() / p
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn split_ref(s: &str) -> Result<(&str, &str), FixtureError> {
    s.split_once('.').ok_or_else(|| invalid(format!("join side '{s}' must be table.column")))
}

impl FixtureSpec {
    pub fn from_toml(text: &str) -> Result<Self, FixtureError> {
        let mut spec: FixtureSpec = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        spec.apply_joins()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path).map_err(io(format!("reading {}", path.display())))?;
        Self::from_toml(&text).map_err(|e| FixtureError::Parse { path: path.to_path_buf(), detail: e.to_string() })
    }

    /// Join sides name the entity column and dimension key.
    fn apply_joins(&mut self) -> Result<(), FixtureError> {
        if let Some(j) = self.joins.first() {
            let (lt, lc) = split_ref(&j.left)?;
            let (rt, rc) = split_ref(&j.right)?;
            self.fact_table = lt.to_string();
            self.entity_column = lc.to_string();
            self.dimension_table = rt.to_string();
            self.dimension_key = rc.to_string();
        }
        Ok(())
    }

    pub fn start(&self) -> Result<NaiveDate, FixtureError> {
        NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d").map_err(|e| invalid(format!("start_date: {e}")))
    }

    pub fn has(&self, f: SourceFormat) -> bool {
        self.formats.contains(&f)
    }

    /// Where the entity dimension lives, if anywhere.
    pub fn dimension_format(&self) -> Option<SourceFormat> {
        if self.has(SourceFormat::SqlDb) {
            Some(SourceFormat::SqlDb)
        } else if self.has(SourceFormat::JsonDoc) {
            Some(SourceFormat::JsonDoc)
        } else {
            None
        }
    }

    pub fn shared_entities(&self) -> usize {
        self.joins.first().map_or(self.entities, |j| (j.overlap * self.entities as f64).round() as usize)
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        self.start()?;
        if !self.has(SourceFormat::Csv) {
            return Err(invalid("formats must include CSV for the fact table"));
        }
        if self.days < 3 || self.entities < 2 {
            return Err(invalid("need at least 3 days and 2 entities"));
        }
        if self.distractors > DISTRACTORS.len() {
            return Err(invalid(format!("at most {} distractor columns are available", DISTRACTORS.len())));
        }
        if self.joins.len() > 1 {
            return Err(invalid("only one planted join (fact entity column to dimension key) is supported"));
        }
        for j in &self.joins {
            if !(j.overlap > 0.0 && j.overlap <= 1.0) {
                return Err(invalid(format!("overlap {} outside (0, 1]", j.overlap)));
            }
            if self.dimension_format().is_none() {
                return Err(invalid("a planted join needs SQL_DB or JSON_DOC for the dimension table"));
            }
            if self.shared_entities() == 0 {
                return Err(invalid("overlap leaves no shared entity"));
            }
        }
        let mut names: BTreeSet<String> = BTreeSet::new();
        let mut claim = |n: &'_ str| -> Result<(), FixtureError> {
            if n.is_empty() || !names.insert(n.to_string()) {
                return Err(invalid(format!("column name '{n}' is empty or used twice")));
            }
            Ok(())
        };
        claim(&self.date_column)?;
        claim(&self.entity_column)?;
        for m in &self.metrics {
            claim(&m.name)?;
            if m.noise < 0.0 {
                return Err(invalid(format!("{}: noise must be non-negative", m.name)));
            }
            self.check_param(&m.base)?;
        }
        for i in &self.insights {
            if let PlantedInsight::Attribution { driver, .. } = i {
                claim(driver)?;
            }
        }
        for d in &DISTRACTORS[..self.distractors] {
            claim(d.0)?;
        }
        let mut extremes = BTreeSet::new();
        for i in &self.insights {
            if !self.metrics.iter().any(|m| m.name == i.metric()) {
                return Err(invalid(format!("insight refers to unknown metric '{}'", i.metric())));
            }
            match i {
                PlantedInsight::Trend { slope, .. } if *slope == 0.0 => return Err(invalid("trend slope must be non-zero")),
                PlantedInsight::Comparison { group, gap, .. } => {
                    if *group >= self.entities || *gap <= 0.0 {
                        return Err(invalid("comparison needs an existing group and a positive gap"));
                    }
                }
                PlantedInsight::Extreme { metric, day, group, margin, .. } => {
                    if *day >= self.days || *group >= self.entities || *margin <= 0.0 {
                        return Err(invalid("extreme needs an existing row and a positive margin"));
                    }
                    if !extremes.insert(metric.clone()) {
                        return Err(invalid(format!("two extremes planted on '{metric}'")));
                    }
                }
                PlantedInsight::Attribution { driver, driver_min, driver_max, driver_scale, effect, sign, .. } => {
                    if driver.is_empty() {
                        return Err(invalid("attribution requires a driver column"));
                    }
                    if driver_min >= driver_max {
                        return Err(invalid(format!("{driver}: driver_min must be below driver_max")));
                    }
                    if sign.abs() != 1.0 {
                        return Err(invalid(format!("{driver}: sign must be 1 or -1")));
                    }
                    if let Some(s) = driver_scale {
                        self.check_param(&Param::Profile(s.clone()))?;
                    }
                    self.check_param(effect)?;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn check_param(&self, p: &Param) -> Result<(), FixtureError> {
        match p {
            Param::Profile(name) if !PROFILE_FIELDS.contains(&name.as_str()) => {
                Err(invalid(format!("unknown profile field '{name}', expected one of {PROFILE_FIELDS:?}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthInsight {
    pub category: InsightCategory,
    pub statement: String,
    pub planted: PlantedInsight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthJoin {
    pub left: Alias,
    pub right: Alias,
    pub overlap: f64,
    pub shared: usize,
}

/// Where things are, relative to the workspace directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub files: Vec<String>,
    pub fact_file: String,
    pub date_column: String,
    pub entity_column: String,
    pub start_date: String,
    pub rows: usize,
    pub dimension_format: Option<SourceFormat>,
    pub dimension_table: String,
    pub dimension_key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realized {
    pub profiles: Vec<EntityProfile>,
    pub dimension_entities: Vec<String>,
    /// Shift added to each comparison group, keyed by metric.
    pub comparison_offsets: BTreeMap<String, f64>,
    pub extreme_values: BTreeMap<String, f64>,
    pub distractors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub insights: Vec<TruthInsight>,
    pub joins: Vec<TruthJoin>,
    pub layout: Layout,
    pub parameters: Realized,
}

impl GroundTruth {
    pub fn statements(&self) -> Vec<String> {
        self.insights.iter().map(|i| i.statement.clone()).collect()
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path).map_err(io(format!("reading {}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), FixtureError> {
        crate::util::write_canonical_json(path, self).map_err(io(format!("writing {}", path.display())))
    }
}

struct Frame {
    dates: Vec<String>,
    day: Vec<usize>,
    entity: Vec<usize>,
    metrics: BTreeMap<String, Vec<f64>>,
    drivers: BTreeMap<String, Vec<f64>>,
    distractors: Vec<(String, Vec<String>)>,
}

fn noun(entity_column: &str) -> String {
    let n = entity_column.trim_end_matches("_id").trim_end_matches("_code").trim_end_matches("_key");
    n.replace('_', " ")
}

fn statement(spec: &FixtureSpec, insight: &PlantedInsight, profiles: &[EntityProfile], start: NaiveDate) -> String {
    let entity = noun(&spec.entity_column);
    match insight {
        PlantedInsight::Trend { metric, slope } => {
            let dir = if *slope > 0.0 { "an increasing" } else { "a decreasing" };
            format!("{metric} shows {dir} trend over {} (about {slope} per day).", spec.date_column)
        }
        PlantedInsight::Comparison { metric, group, gap } => format!(
            "{} has the highest average {metric} compared with the other {entity}s, about {gap} above the rest.",
            profiles[*group].id
        ),
        PlantedInsight::Extreme { metric, day, group, direction, .. } => {
            let word = if *direction == Direction::High { "highest" } else { "lowest" };
            let date = start + Duration::days(*day as i64);
            format!("The {word} {metric} occurs on {date} for {} {}.", entity, profiles[*group].id)
        }
        PlantedInsight::Attribution { metric, driver, sign, .. } => {
            let dir = if *sign > 0.0 { "positively" } else { "negatively" };
            format!("{metric} is {dir} correlated with {driver}.")
        }
    }
}

fn param(p: &Param, profile: &EntityProfile) -> f64 {
    match p {
        Param::Value(v) => *v,
        Param::Profile(name) => profile.field(name).unwrap_or(0.0),
    }
}

fn build_frame(spec: &FixtureSpec, profiles: &[EntityProfile], realized: &mut Realized) -> Result<Frame, FixtureError> {
    let start = spec.start()?;
    let n = spec.days * spec.entities;
    let mut frame = Frame {
        dates: Vec::with_capacity(n),
        day: Vec::with_capacity(n),
        entity: Vec::with_capacity(n),
        metrics: BTreeMap::new(),
        drivers: BTreeMap::new(),
        distractors: Vec::new(),
    };
    for d in 0..spec.days {
        let date = (start + Duration::days(d as i64)).format("%Y-%m-%d").to_string();
        for e in 0..spec.entities {
            frame.dates.push(date.clone());
            frame.day.push(d);
            frame.entity.push(e);
        }
    }

    let mut driver_rng = stream(spec.seed, 2);
    for i in &spec.insights {
        if let PlantedInsight::Attribution { driver, driver_min, driver_max, driver_scale, .. } = i {
            let values = (0..n)
                .map(|r| {
                    let scale = driver_scale.as_deref().and_then(|s| profiles[frame.entity[r]].field(s)).unwrap_or(1.0);
                    round_to(driver_rng.gen_range(*driver_min..*driver_max) * scale, 2)
                })
                .collect();
            frame.drivers.insert(driver.clone(), values);
        }
    }

    let mut noise_rng = stream(spec.seed, 3);
    for m in &spec.metrics {
        let normal = Normal::new(0.0, m.noise.max(0.0)).map_err(|e| invalid(e.to_string()))?;
        let mut values: Vec<f64> = (0..n).map(|r| param(&m.base, &profiles[frame.entity[r]])).collect();
        for i in spec.insights.iter().filter(|i| i.metric() == m.name) {
            match i {
                PlantedInsight::Trend { slope, .. } => {
                    for (r, v) in values.iter_mut().enumerate() {
                        *v += slope * frame.day[r] as f64;
                    }
                }
                PlantedInsight::Attribution { driver, effect, sign, .. } => {
                    let xs = &frame.drivers[driver];
                    for (r, v) in values.iter_mut().enumerate() {
                        *v += sign * param(effect, &profiles[frame.entity[r]]) * xs[r];
                    }
                }
                _ => {}
            }
        }
        for v in values.iter_mut() {
            *v += normal.sample(&mut noise_rng);
        }
        for i in spec.insights.iter().filter(|i| i.metric() == m.name) {
            if let PlantedInsight::Comparison { group, gap, .. } = i {
                let current = group_gap(&values, &frame.entity, *group);
                let offset = gap - current;
                for (r, v) in values.iter_mut().enumerate() {
                    if frame.entity[r] == *group {
                        *v += offset;
                    }
                }
                realized.comparison_offsets.insert(m.name.clone(), offset);
            }
        }
        for i in spec.insights.iter().filter(|i| i.metric() == m.name) {
            if let PlantedInsight::Extreme { day, group, margin, direction, .. } = i {
                let target = day * spec.entities + group;
                let others = values.iter().enumerate().filter(|(r, _)| *r != target).map(|(_, v)| *v);
                let value = match direction {
                    Direction::High => others.fold(f64::NEG_INFINITY, f64::max) + margin,
                    Direction::Low => others.fold(f64::INFINITY, f64::min) - margin,
                };
                values[target] = value;
                realized.extreme_values.insert(m.name.clone(), round_to(value, m.decimals));
            }
        }
        for v in values.iter_mut() {
            *v = round_to(*v, m.decimals);
        }
        frame.metrics.insert(m.name.clone(), values);
    }

    let mut distractor_rng = stream(spec.seed, 4);
    for (name, g) in &DISTRACTORS[..spec.distractors] {
        let values = (0..n).map(|_| draw_distractor(&mut distractor_rng, *g)).collect();
        frame.distractors.push((name.to_string(), values));
        realized.distractors.push(name.to_string());
    }
    Ok(frame)
}

fn group_gap(values: &[f64], entity: &[usize], group: usize) -> f64 {
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (v, e) in values.iter().zip(entity) {
        if *e == group {
            s_in += v;
            n_in += 1;
        } else {
            s_out += v;
            n_out += 1;
        }
    }
    if n_in == 0 || n_out == 0 {
        return f64::NAN;
    }
    s_in / n_in as f64 - s_out / n_out as f64
}

/// Least-squares slope of `ys` on `xs` and its standard error.
pub fn ols(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len().min(ys.len());
    if n < 3 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs[..n].iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs[..n].iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Some((slope, (sse / (n - 2) as f64 / sxx).sqrt()))
}

/// The columns the checks need, however they were obtained.
struct Columns<'a> {
    day: &'a [f64],
    entity: &'a [String],
    dates: &'a [String],
    get: &'a dyn Fn(&str) -> Option<Vec<f64>>,
}

fn check_insight(insight: &PlantedInsight, cols: &Columns<'_>, truth_entities: &[String], start: NaiveDate) -> (bool, String) {
    let Some(y) = (cols.get)(insight.metric()) else {
        return (false, format!("column {} not found", insight.metric()));
    };
    match insight {
        PlantedInsight::Trend { slope, .. } => match ols(cols.day, &y) {
            Some((b, se)) => {
                let ok = b.signum() == slope.signum() && (b / se).abs() >= SE_BOUND && (b - slope).abs() <= SE_BOUND * se;
                (ok, format!("slope {b:.6} (se {se:.6}, planted {slope})"))
            }
            None => (false, "too few rows for a slope".into()),
        },
        PlantedInsight::Comparison { group, gap, .. } => {
            let id = &truth_entities[*group];
            let idx: Vec<usize> = cols.entity.iter().map(|e| usize::from(e != id)).collect();
            let measured = group_gap(&y, &idx, 0);
            (measured >= gap / 2.0, format!("{id} mean gap {measured:.6} (planted {gap}, required {})", gap / 2.0))
        }
        PlantedInsight::Extreme { day, group, direction, .. } => {
            let best = y
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .reduce(|a, b| match direction {
                    Direction::High => if b.1 > a.1 { b } else { a },
                    Direction::Low => if b.1 < a.1 { b } else { a },
                })
                .map(|(i, _)| i);
            let want_date = (start + Duration::days(*day as i64)).format("%Y-%m-%d").to_string();
            let want_entity = &truth_entities[*group];
            match best {
                Some(i) => {
                    let ok = cols.dates[i] == want_date && &cols.entity[i] == want_entity;
                    (ok, format!("extreme at {} {} (planted {want_date} {want_entity})", cols.dates[i], cols.entity[i]))
                }
                None => (false, "no values".into()),
            }
        }
        PlantedInsight::Attribution { driver, sign, .. } => {
            let Some(x) = (cols.get)(driver) else {
                return (false, format!("column {driver} not found"));
            };
            match pearson(&x, &y) {
                Some(r) => (r.signum() == sign.signum() && r.abs() >= MIN_ABS_R, format!("r = {r:.4} with {driver}")),
                None => (false, "correlation undefined".into()),
            }
        }
    }
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn events_json(spec: &FixtureSpec, start: NaiveDate, profiles: &[EntityProfile], dimension: &[String]) -> serde_json::Value {
    let year = start.format("%Y").to_string();
    let periods: Vec<serde_json::Value> = EVENTS
        .iter()
        .map(|(id, name, kind, from, to, description)| {
            serde_json::json!({
                "period_id": format!("p{year}-{id}"),
                "period_name": name,
                "type": kind,
                "start_date": (start + Duration::days(*from)).format("%Y-%m-%d").to_string(),
                "end_date": (start + Duration::days(*to)).format("%Y-%m-%d").to_string(),
                "description": description,
            })
        })
        .collect();
    let mut doc = serde_json::Map::new();
    doc.insert(EVENTS_COLLECTION.into(), serde_json::Value::Array(periods));
    if spec.dimension_format() == Some(SourceFormat::JsonDoc) {
        let rows: Vec<serde_json::Value> = profiles
            .iter()
            .filter(|p| dimension.contains(&p.id))
            .map(|p| {
                let mut o = serde_json::Map::new();
                o.insert(spec.dimension_key.clone(), p.id.clone().into());
                o.insert("region_name".into(), p.name.clone().into());
                for f in PROFILE_FIELDS {
                    o.insert(f.into(), p.field(f).map(|v| round_to(v, 6)).into());
                }
                serde_json::Value::Object(o)
            })
            .collect();
        doc.insert(spec.dimension_table.clone(), serde_json::Value::Array(rows));
    }
    serde_json::Value::Object(doc)
}

fn guide_text(spec: &FixtureSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Metric guide for the {} scenario.", spec.scenario.replace('_', " "));
    let _ = writeln!(
        out,
        "Every row of {} describes one {} on one {}. Rows link to {} through {}.",
        spec.fact_table,
        noun(&spec.entity_column),
        spec.date_column,
        spec.dimension_table,
        spec.dimension_key
    );
    out.push('\n');
    for m in &spec.metrics {
        let label = m.label.clone().unwrap_or_else(|| m.name.replace('_', " "));
        let _ = writeln!(out, "{} = {}", title_case(&label), m.name);
    }
    for i in &spec.insights {
        if let PlantedInsight::Attribution { driver, metric, .. } = i {
            let _ = writeln!(out, "{} = {}", title_case(&driver.replace('_', " ")), driver);
            let _ = writeln!(out, "Analysts track how {driver} moves together with {metric}.");
        }
    }
    out.push('\n');
    let _ = writeln!(out, "Figures are reported daily. Regional base rates come from the {} table.", spec.dimension_table);
    out
}

fn title_case(s: &str) -> String {
    s.split_whitespace()
        .map(|w| {
            let mut c = w.chars();
            c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes the workspace files into `out_dir` and returns what was planted.
/// Fails when a planted insight would not pass its own check.
pub fn generate_workspace(spec: &FixtureSpec, out_dir: &Path) -> Result<GroundTruth, FixtureError> {
    spec.validate()?;
    let start = spec.start()?;
    let mut profile_rng = stream(spec.seed, 1);
    let profiles: Vec<EntityProfile> = (0..spec.entities).map(|i| draw_profile(&mut profile_rng, i, &spec.entity_prefix)).collect();
    let ids: Vec<String> = profiles.iter().map(|p| p.id.clone()).collect();

    let mut dimension: Vec<String> = ids.clone();
    if !spec.joins.is_empty() {
        let mut pick_rng = stream(spec.seed, 5);
        let shared = spec.shared_entities();
        let mut chosen: Vec<usize> = (0..spec.entities).collect();
        chosen.shuffle(&mut pick_rng);
        chosen.truncate(shared);
        chosen.sort_unstable();
        dimension = chosen.into_iter().map(|i| ids[i].clone()).collect();
    }

    let mut realized = Realized {
        profiles: profiles.clone(),
        dimension_entities: dimension.clone(),
        comparison_offsets: BTreeMap::new(),
        extreme_values: BTreeMap::new(),
        distractors: Vec::new(),
    };
    let frame = build_frame(spec, &profiles, &mut realized)?;

    let day_f: Vec<f64> = frame.day.iter().map(|d| *d as f64).collect();
    let entity_ids: Vec<String> = frame.entity.iter().map(|e| ids[*e].clone()).collect();
    let get = |name: &str| frame.metrics.get(name).or_else(|| frame.drivers.get(name)).cloned();
    let cols = Columns { day: &day_f, entity: &entity_ids, dates: &frame.dates, get: &get };
    for i in &spec.insights {
        let (ok, detail) = check_insight(i, &cols, &ids, start);
        if !ok {
            return Err(FixtureError::Undiscoverable { category: i.category().as_str(), metric: i.metric().into(), detail });
        }
    }

    std::fs::create_dir_all(out_dir).map_err(io(format!("creating {}", out_dir.display())))?;
    let mut files = Vec::new();

    let fact_file = format!("{}.csv", spec.fact_table);
    {
        let path = out_dir.join(&fact_file);
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path)?;
        let mut header = vec![spec.date_column.clone(), spec.entity_column.clone()];
        header.extend(spec.metrics.iter().map(|m| m.name.clone()));
        header.extend(frame.drivers.keys().cloned());
        header.extend(frame.distractors.iter().map(|d| d.0.clone()));
        w.write_record(&header)?;
        for r in 0..frame.dates.len() {
            let mut rec = vec![frame.dates[r].clone(), entity_ids[r].clone()];
            for m in &spec.metrics {
                rec.push(format!("{:.*}", m.decimals, frame.metrics[&m.name][r]));
            }
            for v in frame.drivers.values() {
                rec.push(format!("{:.2}", v[r]));
            }
            for (_, v) in &frame.distractors {
                rec.push(v[r].clone());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(io(format!("writing {}", path.display())))?;
        files.push(fact_file.clone());
    }

    if spec.has(SourceFormat::SqlDb) {
        let path = out_dir.join(SQL_FILE);
        if path.exists() {
            std::fs::remove_file(&path).map_err(io(format!("replacing {}", path.display())))?;
        }
        let conn = rusqlite::Connection::open(&path)?;
        conn.execute_batch("PRAGMA journal_mode = DELETE;")?;
        conn.execute_batch(&format!(
            "CREATE TABLE \"{t}\" (\"{k}\" TEXT PRIMARY KEY, region_name TEXT NOT NULL, base_cvr REAL, base_ad_spend REAL, covid_sensitivity REAL, ad_spend_effect REAL);",
            t = spec.dimension_table,
            k = spec.dimension_key
        ))?;
        {
            let tx = conn.unchecked_transaction()?;
            let mut stmt = tx.prepare(&format!("INSERT INTO \"{}\" VALUES (?1, ?2, ?3, ?4, ?5, ?6)", spec.dimension_table))?;
            for p in profiles.iter().filter(|p| dimension.contains(&p.id)) {
                stmt.execute(rusqlite::params![
                    p.id,
                    p.name,
                    round_to(p.base_cvr, 6),
                    round_to(p.base_ad_spend, 2),
                    round_to(p.covid_sensitivity, 7),
                    round_to(p.ad_spend_effect, 8)
                ])?;
            }
            drop(stmt);
            tx.commit()?;
        }
        conn.close().map_err(|(_, e)| e)?;
        files.push(SQL_FILE.to_string());
    }

    if spec.has(SourceFormat::JsonDoc) {
        let doc = events_json(spec, start, &profiles, &dimension);
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        std::fs::write(out_dir.join(EVENTS_FILE), text).map_err(io("writing events"))?;
        files.push(EVENTS_FILE.to_string());
    }

    if spec.has(SourceFormat::Text) {
        std::fs::write(out_dir.join(GUIDE_FILE), guide_text(spec)).map_err(io("writing metric guide"))?;
        files.push(GUIDE_FILE.to_string());
    }

    let fact_stem = spec.fact_table.clone();
    let joins = spec
        .joins
        .iter()
        .map(|j| {
            let right = match spec.dimension_format() {
                Some(SourceFormat::SqlDb) => {
                    Alias::new(SourceFormat::SqlDb, "crm", Some(&spec.dimension_table), &spec.dimension_key)
                }
                _ => Alias::new(SourceFormat::JsonDoc, "company_events", Some(&spec.dimension_table), &spec.dimension_key),
            };
            TruthJoin {
                left: Alias::new(SourceFormat::Csv, &fact_stem, None, &spec.entity_column),
                right,
                overlap: j.overlap,
                shared: dimension.len(),
            }
        })
        .collect();

    Ok(GroundTruth {
        scenario: spec.scenario.clone(),
        seed: spec.seed,
        insights: spec
            .insights
            .iter()
            .map(|i| TruthInsight { category: i.category(), statement: statement(spec, i, &profiles, start), planted: i.clone() })
            .collect(),
        joins,
        layout: Layout {
            files,
            fact_file,
            date_column: spec.date_column.clone(),
            entity_column: spec.entity_column.clone(),
            start_date: spec.start_date.clone(),
            rows: frame.dates.len(),
            dimension_format: spec.dimension_format(),
            dimension_table: spec.dimension_table.clone(),
            dimension_key: spec.dimension_key.clone(),
        },
        parameters: realized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        out
    }
}

struct FactTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl FactTable {
    fn read(path: &Path) -> Result<Self, String> {
        if !path.exists() {
            return Err(format!("file not found: {}", path.display()));
        }
        let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
        let header = r.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| e.to_string())?;
        Ok(Self { header, rows })
    }

    fn text(&self, name: &str) -> Option<Vec<String>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r.get(i).cloned().unwrap_or_default()).collect())
    }

    fn numbers(&self, name: &str) -> Option<Vec<f64>> {
        Some(self.text(name)?.iter().map(|s| s.trim().parse::<f64>().unwrap_or(f64::NAN)).collect())
    }
}

fn dimension_values(dir: &Path, layout: &Layout) -> Result<BTreeSet<String>, String> {
    match layout.dimension_format {
        Some(SourceFormat::SqlDb) => {
            let path = dir.join(SQL_FILE);
            if !path.exists() {
                return Err(format!("file not found: {}", path.display()));
            }
            let conn = rusqlite::Connection::open_with_flags(&path, rusqlite::OpenFlags::SQLITE_OPEN_READ_ONLY)
                .map_err(|e| e.to_string())?;
            let sql = format!("SELECT \"{}\" FROM \"{}\"", layout.dimension_key, layout.dimension_table);
            let mut stmt = conn.prepare(&sql).map_err(|e| e.to_string())?;
            let values = stmt
                .query_map([], |r| r.get::<_, String>(0))
                .map_err(|e| e.to_string())?
                .collect::<Result<BTreeSet<String>, _>>()
                .map_err(|e| e.to_string())?;
            Ok(values)
        }
        Some(SourceFormat::JsonDoc) => {
            let path = dir.join(EVENTS_FILE);
            let text = std::fs::read_to_string(&path).map_err(|_| format!("file not found: {}", path.display()))?;
            let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            let rows = doc.get(&layout.dimension_table).and_then(|v| v.as_array()).ok_or("dimension collection missing")?;
            Ok(rows.iter().filter_map(|r| r.get(&layout.dimension_key)?.as_str().map(str::to_string)).collect())
        }
        _ => Err("workspace has no dimension table".into()),
    }
}

/// Re-reads the emitted files and checks every planted insight and join.
pub fn verify_workspace(dir: &Path, truth: &GroundTruth) -> VerificationReport {
    let mut checks = Vec::new();
    let layout = &truth.layout;
    let fact = FactTable::read(&dir.join(&layout.fact_file));
    let start = NaiveDate::parse_from_str(&layout.start_date, "%Y-%m-%d").ok();
    let ids: Vec<String> = truth.parameters.profiles.iter().map(|p| p.id.clone()).collect();
    for (n, insight) in truth.insights.iter().enumerate() {
        let name = format!("insight {} {} {}", n + 1, insight.category.as_str(), insight.planted.metric());
        let (passed, detail) = match (&fact, start) {
            (Err(e), _) => (false, e.clone()),
            (_, None) => (false, format!("bad start date {}", layout.start_date)),
            (Ok(fact), Some(start)) => match (fact.text(&layout.date_column), fact.text(&layout.entity_column)) {
                (Some(dates), Some(entity)) => {
                    let day: Vec<f64> = dates
                        .iter()
                        .map(|d| {
                            NaiveDate::parse_from_str(d, "%Y-%m-%d").map_or(f64::NAN, |d| (d - start).num_days() as f64)
                        })
                        .collect();
                    let get = |c: &str| fact.numbers(c);
                    let cols = Columns { day: &day, entity: &entity, dates: &dates, get: &get };
                    check_insight(&insight.planted, &cols, &ids, start)
                }
                _ => (false, "date or entity column missing".into()),
            },
        };
        checks.push(CheckResult { name, passed, detail });
    }
    for j in &truth.joins {
        let name = format!("join {} ~ {}", j.left, j.right);
        let left = fact.as_ref().map_err(Clone::clone).and_then(|f| {
            f.text(&j.left.column).map(|v| v.into_iter().collect::<BTreeSet<_>>()).ok_or_else(|| format!("column {} not found", j.left.column))
        });
        let (passed, detail) = match (left, dimension_values(dir, layout)) {
            (Ok(a), Ok(b)) => {
                let s = jaccard(&a, &b);
                (s >= j.overlap - JOIN_SLACK, format!("jaccard {s:.4} (planted overlap {})", j.overlap))
            }
            (Err(e), _) | (_, Err(e)) => (false, e),
        };
        checks.push(CheckResult { name, passed, detail });
    }
    VerificationReport { checks }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const DEMO: &str = r#"
seed = 7
scenario = "regional_cvr"
start_date = "2022-04-01"
days = 91
entities = 6
distractors = 12

[[metrics]]
name = "daily_cvr"
label = "conversion rate"
base = "base_cvr"
noise = 0.01

[[insights]]
category = "TREND"
metric = "daily_cvr"
slope = -0.0008

[[insights]]
category = "ATTRIBUTION"
metric = "daily_cvr"
driver = "covid_severity"
driver_min = 0.0
driver_max = 100.0
effect = "covid_sensitivity"
sign = -1.0

[[insights]]
category = "COMPARISON"
metric = "daily_cvr"
group = 2
gap = 0.08

[[insights]]
category = "EXTREME"
metric = "daily_cvr"
day = 45
group = 4
margin = 0.05

[[joins]]
left = "daily_summary.region_id"
right = "regions.region_code"
overlap = 1.0
"#;

    fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect()
    }

    #[test]
    fn generation_is_byte_deterministic_and_verifies() {
        let spec = FixtureSpec::from_toml(DEMO).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ta = generate_workspace(&spec, a.path()).unwrap();
        let tb = generate_workspace(&spec, b.path()).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(read_dir(a.path()), read_dir(b.path()));
        assert_eq!(ta.layout.files.len(), 4);
        let report = verify_workspace(a.path(), &ta);
        assert!(report.all_passed(), "{}", report.render());
        assert_eq!(report.checks.len(), 5);
    }

    #[test]
    fn profiles_follow_the_documented_ranges() {
        let spec = FixtureSpec::from_toml(DEMO).unwrap();
        let dir = tempfile::tempdir().unwrap();
        generate_workspace(&spec, dir.path()).unwrap();
        let conn = rusqlite::Connection::open(dir.path().join(SQL_FILE)).unwrap();
        let mut stmt = conn.prepare("SELECT base_cvr, base_ad_spend, covid_sensitivity, ad_spend_effect FROM regions").unwrap();
        let rows: Vec<[f64; 4]> =
            stmt.query_map([], |r| Ok([r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?])).unwrap().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 6);
        for [cvr, spend, covid, ad] in rows {
            assert!((0.4..=0.6).contains(&cvr));
            assert!((800.0..=4500.0).contains(&spend));
            assert!((0.0009..=0.0022).contains(&covid));
            assert!((0.00002..=0.00005).contains(&ad));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let spec = FixtureSpec::from_toml(DEMO).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec.clone();
        s.joins[0].overlap = 0.0;
        assert!(matches!(generate_workspace(&s, dir.path()), Err(FixtureError::Invalid(_))));
        let mut s = spec.clone();
        if let PlantedInsight::Attribution { driver, .. } = &mut s.insights[1] {
            driver.clear();
        }
        assert!(matches!(generate_workspace(&s, dir.path()), Err(FixtureError::Invalid(_))));
        let mut s = spec.clone();
        s.metrics[0].name = "other".into();
        assert!(generate_workspace(&s, dir.path()).is_err());
        let mut s = spec;
        s.formats = vec![SourceFormat::Text];
        assert!(generate_workspace(&s, dir.path()).is_err());
    }

    #[test]
    fn weak_attribution_is_refused() {
        let mut spec = FixtureSpec::from_toml(DEMO).unwrap();
        spec.metrics[0].noise = 0.5;
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(generate_workspace(&spec, dir.path()), Err(FixtureError::Undiscoverable { .. })));
    }

    #[test]
    fn missing_file_fails_the_check() {
        let spec = FixtureSpec::from_toml(DEMO).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let truth = generate_workspace(&spec, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("daily_summary.csv")).unwrap();
        let report = verify_workspace(dir.path(), &truth);
        assert!(report.checks.iter().filter(|c| c.name.starts_with("insight")).all(|c| !c.passed && c.detail.starts_with("file not found")));
    }

    #[test]
    fn partial_overlap_shares_the_rounded_count() {
        let mut spec = FixtureSpec::from_toml(DEMO).unwrap();
        spec.entities = 10;
        spec.insights.retain(|i| matches!(i, PlantedInsight::Trend { .. }));
        spec.joins[0].overlap = 0.8;
        let dir = tempfile::tempdir().unwrap();
        let truth = generate_workspace(&spec, dir.path()).unwrap();
        assert_eq!(truth.joins[0].shared, 8);
        assert_eq!(truth.joins[0].right.to_string(), "sqlite.crm.regions.region_code");
        assert!(verify_workspace(dir.path(), &truth).all_passed());
    }

    #[test]
    fn json_dimension_when_no_database() {
        let mut spec = FixtureSpec::from_toml(DEMO).unwrap();
        spec.formats = vec![SourceFormat::Csv, SourceFormat::JsonDoc];
        let dir = tempfile::tempdir().unwrap();
        let truth = generate_workspace(&spec, dir.path()).unwrap();
        assert_eq!(truth.joins[0].right.to_string(), "json.company_events.regions.region_code");
        assert!(verify_workspace(dir.path(), &truth).all_passed());
    }
}
