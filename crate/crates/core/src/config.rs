//! Pipeline configuration file.
//!
//! A kvtext document whose keys carry dotted section prefixes:
//!
//! ```text
//! schema_version = 1
//! seed = 7
//! paths.data = data/turbine.csv
//! paths.noc = data/noc.csv
//! paths.output_dir = out
//! paths.timestamp_column = timestamp
//! split.train_fraction = 0.7
//! prep.top_k = 20                  # any PrepConfig key
//! changefinder.threshold = 2.5     # default: f1 preset at threshold 2.5; also preset/r/order/smooth/min_gap/mode
//! changefinder.drop_straddling = false
//! tune.enabled = false
//! tune.objective = f1
//! tune.grid.r = 0.01, 0.05, 0.1    # also tune.grid.order/smooth/threshold
//! window.minutes = 30             # window span at the data's median cadence
//! window.window_len = 30           # explicit sample counts override minutes
//! window.stride = 10
//! window.horizon = 30
//! window.exceed_quantile = 0.95
//! train.n_trees = 100              # any TrainConfig key except seed
//! ensemble.members = rf, gbt
//! ensemble.decision_threshold = 0.5
//! health.window = 60
//! health.warning_threshold = 0.5
//! health.alert_threshold = 0.25
//! ```
//!
//! Unknown keys are rejected. Component seeds are derived from `seed`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::changefinder::ChangeFinderConfig;
use crate::data_io::DEFAULT_TIMESTAMP_COLUMN;
use crate::detectors::{DetectorKind, TrainConfig};
use crate::ensemble::DEFAULT_DECISION_THRESHOLD;
use crate::error::{Error, Result};
use crate::health::HealthConfig;
use crate::kvtext::{fmt_f64, Document};
use crate::prep::PrepConfig;
use crate::seed;
use crate::tuner::{Objective, ParamGrid};
use crate::windowing::WindowSpec;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub noc: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub timestamp_column: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub enabled: bool,
    pub objective: Objective,
    pub grid: ParamGrid,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            objective: Objective::F1,
            grid: ParamGrid {
                r_values: vec![0.01, 0.05, 0.1],
                order_values: vec![1, 2],
                smooth_values: vec![5, 10],
                threshold_values: vec![1.5, 1.8, 2.5],
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub train_fraction: f64,
    pub prep: PrepConfig,
    pub changefinder: ChangeFinderConfig,
    /// Drop windows that straddle a detected change point.
    pub drop_straddling: bool,
    pub tune: TuneConfig,
    /// Window span used when `window` is not given explicitly.
    pub window_minutes: f64,
    /// Explicit window in samples.
    pub window: Option<WindowSpec>,
    pub exceed_quantile: f64,
    /// Detector settings; the seed is always derived from [`Self::seed`].
    pub train: TrainConfig,
    pub members: Vec<DetectorKind>,
    pub decision_threshold: f64,
    pub health: HealthConfig,
}

/// Change threshold the pipeline applies on top of the `f1` preset.
pub const DEFAULT_CHANGE_THRESHOLD: f64 = 2.5;

impl Default for PipelineConfig {
    fn default() -> Self {
        let seed = 0;
        Self {
            seed,
            paths: Paths {
                data: None,
                noc: None,
                output_dir: PathBuf::from("pdm-out"),
                timestamp_column: DEFAULT_TIMESTAMP_COLUMN.to_string(),
            },
            train_fraction: 0.7,
            prep: PrepConfig::default(),
            changefinder: ChangeFinderConfig {
                threshold: DEFAULT_CHANGE_THRESHOLD,
                ..ChangeFinderConfig::preset_f1()
            },
            drop_straddling: false,
            tune: TuneConfig::default(),
            window_minutes: 30.0,
            window: None,
            exceed_quantile: 0.95,
            train: TrainConfig {
                seed: seed::derive(seed, "train"),
                ..TrainConfig::default()
            },
            members: vec![DetectorKind::RandomForest, DetectorKind::Gbt],
            decision_threshold: DEFAULT_DECISION_THRESHOLD,
            health: HealthConfig::default(),
        }
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

impl PipelineConfig {
    pub fn with_seed(mut self, seed_: u64) -> Self {
        self.seed = seed_;
        self.train.seed = seed::derive(seed_, "train");
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.train_fraction = {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.exceed_quantile) {
            return Err(Error::Config("window.exceed_quantile must lie in [0, 1]".into()));
        }
        if self.members.len() < 2 {
            return Err(Error::Config("ensemble.members needs at least 2 detectors".into()));
        }
        let distinct: HashSet<_> = self.members.iter().collect();
        if distinct.len() != self.members.len() {
            return Err(Error::Config("ensemble.members lists a detector twice".into()));
        }
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return Err(Error::Config("ensemble.decision_threshold must lie in [0, 1]".into()));
        }
        if self.health.window < 1 {
            return Err(Error::Config("health.window must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.health.warning_threshold) || !(0.0..=1.0).contains(&self.health.alert_threshold) {
            return Err(Error::Config("health thresholds must lie in [0, 1]".into()));
        }
        if self.train.seed != seed::derive(self.seed, "train") {
            return Err(Error::Config("train seed must derive from the master seed".into()));
        }
        self.prep.validate()?;
        self.changefinder.validate()?;
        self.tune.grid.validate()?;
        if let Some(w) = &self.window {
            w.validate()?;
        }
        if !(self.window_minutes > 0.0 && self.window_minutes.is_finite()) {
            return Err(Error::Config("window.minutes must be > 0".into()));
        }
        self.train.validate()
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::new();
        d.push("schema_version", CONFIG_SCHEMA_VERSION.to_string());
        d.push("seed", self.seed.to_string());
        if let Some(p) = &self.paths.data {
            d.push("paths.data", p.display().to_string());
        }
        if let Some(p) = &self.paths.noc {
            d.push("paths.noc", p.display().to_string());
        }
        d.push("paths.output_dir", self.paths.output_dir.display().to_string());
        d.push("paths.timestamp_column", self.paths.timestamp_column.clone());
        d.push_f64("split.train_fraction", self.train_fraction);
        d.extend_prefixed("prep", &self.prep.to_document());
        d.extend_prefixed("changefinder", &self.changefinder.to_document());
        d.push("changefinder.drop_straddling", self.drop_straddling.to_string());
        d.push("tune.enabled", self.tune.enabled.to_string());
        d.push("tune.objective", self.tune.objective.as_str());
        let g = &self.tune.grid;
        d.push("tune.grid.r", join(&g.r_values, |v| fmt_f64(*v)));
        d.push("tune.grid.order", join(&g.order_values, usize::to_string));
        d.push("tune.grid.smooth", join(&g.smooth_values, usize::to_string));
        d.push("tune.grid.threshold", join(&g.threshold_values, |v| fmt_f64(*v)));
        d.push_f64("window.minutes", self.window_minutes);
        if let Some(w) = &self.window {
            d.extend_prefixed("window", &w.to_document());
        }
        d.push_f64("window.exceed_quantile", self.exceed_quantile);
        let mut train = Document::new();
        for (k, v) in self.train.to_document().entries().filter(|(k, _)| *k != "seed") {
            train.push(k, v);
        }
        d.extend_prefixed("train", &train);
        d.push("ensemble.members", join(&self.members, |k| k.as_str().to_string()));
        d.push_f64("ensemble.decision_threshold", self.decision_threshold);
        d.push("health.window", self.health.window.to_string());
        d.push_f64("health.warning_threshold", self.health.warning_threshold);
        d.push_f64("health.alert_threshold", self.health.alert_threshold);
        d
    }

    pub fn to_text(&self) -> String {
        self.to_document().to_text()
    }

    pub fn from_document(d: &Document) -> Result<Self> {
        if d.contains("schema_version") {
            d.expect_schema(CONFIG_SCHEMA_VERSION)?;
        }
        let mut known: HashSet<String> = Self::default()
            .to_document()
            .entries()
            .map(|(k, _)| k.to_string())
            .collect();
        for k in [
            "paths.data",
            "paths.noc",
            "changefinder.preset",
            "window.window_len",
            "window.stride",
            "window.horizon",
        ] {
            known.insert(k.to_string());
        }
        if let Some((k, _)) = d.entries().find(|(k, _)| !known.contains(*k)) {
            return Err(Error::Config(format!("unknown configuration key `{k}`")));
        }

        let mut c = Self::default().with_seed(d.parsed("seed")?.unwrap_or(0));
        if let Some(p) = d.get("paths.data") {
            c.paths.data = Some(PathBuf::from(p));
        }
        if let Some(p) = d.get("paths.noc") {
            c.paths.noc = Some(PathBuf::from(p));
        }
        if let Some(p) = d.get("paths.output_dir") {
            c.paths.output_dir = PathBuf::from(p);
        }
        if let Some(p) = d.get("paths.timestamp_column") {
            c.paths.timestamp_column = p.to_string();
        }
        if let Some(v) = d.f64("split.train_fraction")? {
            c.train_fraction = v;
        }
        c.prep = PrepConfig::from_document(&d.section("prep"))?;
        let cf = d.section("changefinder");
        let mut cf_only = Document::new();
        for (k, v) in cf.entries().filter(|(k, _)| *k != "drop_straddling") {
            cf_only.push(k, v);
        }
        if !cf_only.is_empty() {
            if !cf_only.contains("preset") {
                let mut merged = Document::new();
                for (k, v) in c.changefinder.to_document().entries() {
                    if k == "min_gap" && cf_only.contains("smooth") {
                        continue;
                    }
                    merged.push(k, cf_only.get(k).unwrap_or(v));
                }
                let extra: Vec<(String, String)> = cf_only
                    .entries()
                    .filter(|(k, _)| !merged.contains(k))
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect();
                for (k, v) in extra {
                    merged.push(k, v);
                }
                cf_only = merged;
            }
            c.changefinder = ChangeFinderConfig::from_document(&cf_only)?;
        }
        if let Some(v) = cf.bool("drop_straddling")? {
            c.drop_straddling = v;
        }
        if let Some(v) = d.bool("tune.enabled")? {
            c.tune.enabled = v;
        }
        if let Some(v) = d.get("tune.objective") {
            c.tune.objective = Objective::parse(v).ok_or_else(|| Error::Config(format!("unknown objective `{v}`")))?;
        }
        let grid = d.section("tune.grid");
        if !grid.is_empty() {
            let mut full = c.tune.grid.to_document();
            for (k, v) in grid.entries() {
                full.push(k, v);
            }
            c.tune.grid = ParamGrid::from_document(&full)?;
        }
        let window = d.section("window");
        if let Some(v) = window.f64("minutes")? {
            c.window_minutes = v;
        }
        if window.contains("window_len") {
            c.window = Some(WindowSpec::from_document(&window)?);
        } else if window.contains("stride") || window.contains("horizon") {
            return Err(Error::Config("window.stride and window.horizon need window.window_len".into()));
        }
        if let Some(v) = window.f64("exceed_quantile")? {
            c.exceed_quantile = v;
        }
        let mut train = d.section("train");
        train.push("seed", c.train.seed.to_string());
        c.train = TrainConfig::from_document(&train)?;
        if let Some(list) = d.list("ensemble.members") {
            c.members = list
                .into_iter()
                .map(|s| DetectorKind::parse(s).ok_or_else(|| Error::Config(format!("unknown detector `{s}`"))))
                .collect::<Result<_>>()?;
        }
        if let Some(v) = d.f64("ensemble.decision_threshold")? {
            c.decision_threshold = v;
        }
        if let Some(v) = d.parsed("health.window")? {
            c.health.window = v;
        }
        if let Some(v) = d.f64("health.warning_threshold")? {
            c.health.warning_threshold = v;
        }
        if let Some(v) = d.f64("health.alert_threshold")? {
            c.health.alert_threshold = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_document(&Document::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
