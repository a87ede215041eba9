//! Anomaly detectors behind one interface: random forest, gradient-boosted
//! trees, isolation forest, PCA reconstruction error and KMeans distance.
//!
//! Supervised models emit native probabilities; unsupervised raw scores go
//! through a min-max calibration fitted on the training rows.

pub mod forest;
pub mod gbt;
pub mod iforest;
pub mod kmeans;
pub mod pca;
pub mod tree;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kvtext::Document;
use crate::seed;

pub use tree::{fit_tree, CartParams, Node, Tree};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorKind {
    RandomForest,
    Gbt,
    IsolationForest,
    Pca,
    KMeans,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::RandomForest,
        DetectorKind::Gbt,
        DetectorKind::IsolationForest,
        DetectorKind::Pca,
        DetectorKind::KMeans,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::RandomForest => "rf",
            DetectorKind::Gbt => "gbt",
            DetectorKind::IsolationForest => "iforest",
            DetectorKind::Pca => "pca",
            DetectorKind::KMeans => "kmeans",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn is_supervised(self) -> bool {
        matches!(self, DetectorKind::RandomForest | DetectorKind::Gbt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassWeighting {
    None,
    InverseFrequency,
}

impl ClassWeighting {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassWeighting::None => "none",
            ClassWeighting::InverseFrequency => "inverse_frequency",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(ClassWeighting::None),
            "inverse_frequency" => Some(ClassWeighting::InverseFrequency),
            _ => None,
        }
    }

    /// Per-sample weights: `n / (2 · n_class)` for inverse frequency.
    pub fn weights(self, y: &[bool]) -> Vec<f64> {
        let n = y.len() as f64;
        let pos = y.iter().filter(|&&v| v).count() as f64;
        match self {
            ClassWeighting::None => vec![1.0; y.len()],
            ClassWeighting::InverseFrequency => {
                let wp = if pos > 0.0 { n / (2.0 * pos) } else { 1.0 };
                let wn = if n - pos > 0.0 { n / (2.0 * (n - pos)) } else { 1.0 };
                y.iter().map(|&v| if v { wp } else { wn }).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features per random-forest split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub gbt_rounds: usize,
    pub gbt_max_depth: usize,
    pub learning_rate: f64,
    pub reg_lambda: f64,
    pub gamma: f64,
    pub gbt_subsample: f64,
    pub class_weighting: ClassWeighting,
    pub iforest_trees: usize,
    pub iforest_subsample: usize,
    /// `None` picks the fewest components explaining 90% of the variance.
    pub n_components: Option<usize>,
    pub k_clusters: usize,
    /// Z-score features before PCA and KMeans.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_trees: 100,
            max_depth: 8,
            min_samples_leaf: 5,
            max_features: None,
            bootstrap: true,
            gbt_rounds: 100,
            gbt_max_depth: 4,
            learning_rate: 0.1,
            reg_lambda: 1.0,
            gamma: 0.0,
            gbt_subsample: 1.0,
            class_weighting: ClassWeighting::InverseFrequency,
            iforest_trees: 100,
            iforest_subsample: 256,
            n_components: None,
            k_clusters: 4,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!("learning_rate {} must lie in (0, 1]", self.learning_rate)));
        }
        if !(self.reg_lambda >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::Config("reg_lambda and gamma must be >= 0".into()));
        }
        if !(self.gbt_subsample > 0.0 && self.gbt_subsample <= 1.0) {
            return Err(Error::Config("gbt_subsample must lie in (0, 1]".into()));
        }
        if self.n_trees == 0 || self.gbt_rounds == 0 || self.iforest_trees == 0 || self.k_clusters == 0 {
            return Err(Error::Config("tree, round and cluster counts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::new();
        d.push("seed", self.seed.to_string());
        d.push("n_trees", self.n_trees.to_string());
        d.push("max_depth", self.max_depth.to_string());
        d.push("min_samples_leaf", self.min_samples_leaf.to_string());
        d.push("max_features", self.max_features.map_or("auto".into(), |m| m.to_string()));
        d.push("bootstrap", self.bootstrap.to_string());
        d.push("gbt_rounds", self.gbt_rounds.to_string());
        d.push("gbt_max_depth", self.gbt_max_depth.to_string());
        d.push_f64("learning_rate", self.learning_rate);
        d.push_f64("reg_lambda", self.reg_lambda);
        d.push_f64("gamma", self.gamma);
        d.push_f64("gbt_subsample", self.gbt_subsample);
        d.push("class_weighting", self.class_weighting.as_str());
        d.push("iforest_trees", self.iforest_trees.to_string());
        d.push("iforest_subsample", self.iforest_subsample.to_string());
        d.push("n_components", self.n_components.map_or("auto".into(), |m| m.to_string()));
        d.push("k_clusters", self.k_clusters.to_string());
        d.push("standardize", self.standardize.to_string());
        d
    }

    /// Starts from the defaults and overrides every key present.
    pub fn from_document(d: &Document) -> Result<Self> {
        fn auto(d: &Document, key: &str) -> Result<Option<Option<usize>>> {
            match d.get(key) {
                None => Ok(None),
                Some("auto") => Ok(Some(None)),
                Some(v) => v
                    .parse()
                    .map(|n| Some(Some(n)))
                    .map_err(|_| Error::Config(format!("bad `{key}` value `{v}`"))),
            }
        }
        let mut c = Self::default();
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = d.parsed(stringify!($field))? {
                    c.$field = v;
                }
            };
        }
        set!(seed);
        set!(n_trees);
        set!(max_depth);
        set!(min_samples_leaf);
        set!(gbt_rounds);
        set!(gbt_max_depth);
        set!(iforest_trees);
        set!(iforest_subsample);
        set!(k_clusters);
        for (key, slot) in [
            ("learning_rate", &mut c.learning_rate),
            ("reg_lambda", &mut c.reg_lambda),
            ("gamma", &mut c.gamma),
            ("gbt_subsample", &mut c.gbt_subsample),
        ] {
            if let Some(v) = d.f64(key)? {
                *slot = v;
            }
        }
        if let Some(v) = d.bool("bootstrap")? {
            c.bootstrap = v;
        }
        if let Some(v) = d.bool("standardize")? {
            c.standardize = v;
        }
        if let Some(v) = auto(d, "max_features")? {
            c.max_features = v;
        }
        if let Some(v) = auto(d, "n_components")? {
            c.n_components = v;
        }
        if let Some(v) = d.get("class_weighting") {
            c.class_weighting =
                ClassWeighting::parse(v).ok_or_else(|| Error::Config(format!("unknown class weighting `{v}`")))?;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Per-feature affine standardization; the identity when disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    /// Column means and population standard deviations (zero spread maps
    /// to scale 1).
    pub fn fit(rows: &[&[f64]]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Raw-score to probability mapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Calibration {
    /// The raw score already is a probability.
    Native,
    MinMax { lo: f64, hi: f64 },
}

impl Calibration {
    pub fn fit_min_max(raw: &[f64]) -> Self {
        let (lo, hi) = raw
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo.is_finite() {
            Calibration::MinMax { lo, hi }
        } else {
            Calibration::MinMax { lo: 0.0, hi: 0.0 }
        }
    }

    /// Maps into `[0, 1]`: clamped min-max, `0.5` when `lo == hi`, and
    /// `1.0` for NaN raw scores.
    pub fn apply(self, raw: f64) -> f64 {
        if raw.is_nan() {
            return 1.0;
        }
        match self {
            Calibration::Native => raw.clamp(0.0, 1.0),
            Calibration::MinMax { lo, hi } => {
                if !(hi > lo) {
                    0.5
                } else {
                    ((raw - lo) / (hi - lo)).clamp(0.0, 1.0)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    RandomForest {
        trees: Vec<Tree>,
    },
    Gbt {
        base_score: f64,
        trees: Vec<Tree>,
        loss_trace: Vec<f64>,
    },
    IsolationForest {
        subsample: usize,
        trees: Vec<Tree>,
    },
    Pca {
        scaler: Scaler,
        fit: pca::PcaFit,
    },
    KMeans {
        scaler: Scaler,
        centroids: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub feature_names: Vec<String>,
    pub params: ModelParams,
    pub calibration: Calibration,
}

fn check_rows(x: &[Vec<f64>], d: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Empty("no training rows"));
    }
    for (i, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(Error::Dimension { expected: d, got: r.len() });
        }
        if let Some(v) = r.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i, value: *v });
        }
    }
    Ok(())
}

/// Fits one detector. `y` marks anomalous rows; unsupervised detectors
/// ignore it except PCA, which is fitted on normal rows only.
pub fn fit_detector(
    kind: DetectorKind,
    x: &[Vec<f64>],
    y: &[bool],
    feature_names: &[String],
    config: &TrainConfig,
) -> Result<DetectorModel> {
    config.validate()?;
    let d = feature_names.len();
    check_rows(x, d)?;
    if y.len() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    let component_seed = seed::derive(config.seed, kind.as_str());
    let params = match kind {
        DetectorKind::RandomForest => {
            let w = config.class_weighting.weights(y);
            let p = forest::ForestParams {
                n_trees: config.n_trees,
                max_depth: config.max_depth,
                min_samples_leaf: config.min_samples_leaf,
                max_features: config.max_features,
                bootstrap: config.bootstrap,
                seed: component_seed,
            };
            ModelParams::RandomForest {
                trees: forest::fit_forest(x, y, &w, &p)?,
            }
        }
        DetectorKind::Gbt => {
            let w = config.class_weighting.weights(y);
            let p = gbt::GbtParams {
                n_rounds: config.gbt_rounds,
                max_depth: config.gbt_max_depth,
                min_samples_leaf: config.min_samples_leaf,
                learning_rate: config.learning_rate,
                reg_lambda: config.reg_lambda,
                gamma: config.gamma,
                subsample: config.gbt_subsample,
                seed: component_seed,
            };
            let fit = gbt::fit_gbt(x, y, &w, &p)?;
            ModelParams::Gbt {
                base_score: fit.base_score,
                trees: fit.trees,
                loss_trace: fit.loss_trace,
            }
        }
        DetectorKind::IsolationForest => {
            let (subsample, trees) =
                iforest::fit_isolation_forest(x, config.iforest_trees, config.iforest_subsample, component_seed)?;
            ModelParams::IsolationForest { subsample, trees }
        }
        DetectorKind::Pca => {
            let normal: Vec<&[f64]> = x.iter().zip(y).filter(|(_, &a)| !a).map(|(r, _)| r.as_slice()).collect();
            let scaler = if config.standardize {
                Scaler::fit(&normal)
            } else {
                Scaler::identity(d)
            };
            let rows: Vec<Vec<f64>> = normal.iter().map(|r| scaler.transform(r)).collect();
            let k = match config.n_components {
                Some(k) => k,
                None => {
                    let full = pca::fit_pca(&rows, d)?;
                    let total: f64 = full.eigenvalues.iter().map(|v| v.max(0.0)).sum();
                    let mut acc = 0.0;
                    let mut k = 0;
                    for v in &full.eigenvalues {
                        k += 1;
                        acc += v.max(0.0);
                        if acc >= 0.9 * total {
                            break;
                        }
                    }
                    k.min(d.saturating_sub(1)).max(1)
                }
            };
            let fit = pca::fit_pca(&rows, k)?;
            ModelParams::Pca { scaler, fit }
        }
        DetectorKind::KMeans => {
            let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
            let scaler = if config.standardize {
                Scaler::fit(&refs)
            } else {
                Scaler::identity(d)
            };
            let rows: Vec<Vec<f64>> = x.iter().map(|r| scaler.transform(r)).collect();
            ModelParams::KMeans {
                centroids: kmeans::fit_kmeans(&rows, config.k_clusters, component_seed)?,
                scaler,
            }
        }
    };
    let mut model = DetectorModel {
        feature_names: feature_names.to_vec(),
        params,
        calibration: Calibration::Native,
    };
    if !kind.is_supervised() {
        let raw: Vec<f64> = x.par_iter().map(|r| model.raw_score(r)).collect();
        model.calibration = Calibration::fit_min_max(&raw);
    }
    Ok(model)
}

impl DetectorModel {
    pub fn kind(&self) -> DetectorKind {
        match self.params {
            ModelParams::RandomForest { .. } => DetectorKind::RandomForest,
            ModelParams::Gbt { .. } => DetectorKind::Gbt,
            ModelParams::IsolationForest { .. } => DetectorKind::IsolationForest,
            ModelParams::Pca { .. } => DetectorKind::Pca,
            ModelParams::KMeans { .. } => DetectorKind::KMeans,
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Uncalibrated score; larger means more anomalous.
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        match &self.params {
            ModelParams::RandomForest { trees } => forest::predict(trees, x),
            ModelParams::Gbt { base_score, trees, .. } => gbt::sigmoid(gbt::margin(*base_score, trees, x)),
            ModelParams::IsolationForest { subsample, trees } => iforest::score(trees, *subsample, x),
            ModelParams::Pca { scaler, fit } => pca::reconstruction_error(fit, &scaler.transform(x)),
            ModelParams::KMeans { scaler, centroids } => kmeans::nearest(centroids, &scaler.transform(x)).1.sqrt(),
        }
    }

    /// Anomaly probability in `[0, 1]`.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.calibration.apply(self.raw_score(x))
    }

    pub fn predict_proba_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if let Some(r) = rows.iter().find(|r| r.len() != self.n_features()) {
            return Err(Error::Dimension {
                expected: self.n_features(),
                got: r.len(),
            });
        }
        Ok(rows.par_iter().map(|r| self.predict_proba(r)).collect())
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::new();
        d.push("schema_version", MODEL_SCHEMA_VERSION.to_string());
        d.push("kind", "detector_model");
        d.push("detector", self.kind().as_str());
        d.push("n_features", self.n_features().to_string());
        for (i, name) in self.feature_names.iter().enumerate() {
            d.push(format!("feature.{i}"), name.clone());
        }
        match self.calibration {
            Calibration::Native => d.push("calibration", "native"),
            Calibration::MinMax { lo, hi } => {
                d.push("calibration", "minmax");
                d.push_f64("calibration.lo", lo);
                d.push_f64("calibration.hi", hi);
            }
        }
        let push_trees = |d: &mut Document, trees: &[Tree]| {
            d.push("n_trees", trees.len().to_string());
            for (t, tree) in trees.iter().enumerate() {
                d.push(format!("tree.{t}"), tree.encode());
            }
        };
        let push_scaler = |d: &mut Document, s: &Scaler| {
            d.push_f64s("scaler.mean", &s.mean);
            d.push_f64s("scaler.scale", &s.scale);
        };
        match &self.params {
            ModelParams::RandomForest { trees } => push_trees(&mut d, trees),
            ModelParams::Gbt {
                base_score,
                trees,
                loss_trace,
            } => {
                d.push_f64("base_score", *base_score);
                d.push_f64s("loss_trace", loss_trace);
                push_trees(&mut d, trees);
            }
            ModelParams::IsolationForest { subsample, trees } => {
                d.push("subsample", subsample.to_string());
                push_trees(&mut d, trees);
            }
            ModelParams::Pca { scaler, fit } => {
                push_scaler(&mut d, scaler);
                d.push_f64s("pca.mean", &fit.mean);
                d.push_f64s("pca.eigenvalues", &fit.eigenvalues);
                d.push("pca.n_components", fit.components.len().to_string());
                for (j, v) in fit.components.iter().enumerate() {
                    d.push_f64s(format!("pca.component.{j}"), v);
                }
            }
            ModelParams::KMeans { scaler, centroids } => {
                push_scaler(&mut d, scaler);
                d.push("kmeans.k", centroids.len().to_string());
                for (j, c) in centroids.iter().enumerate() {
                    d.push_f64s(format!("kmeans.centroid.{j}"), c);
                }
            }
        }
        d
    }

    pub fn to_text(&self) -> String {
        self.to_document().to_text()
    }

    pub fn from_document(d: &Document) -> Result<Self> {
        d.expect_schema(MODEL_SCHEMA_VERSION)?;
        if d.get("kind") != Some("detector_model") {
            return Err(Error::Invalid("not a detector model file (kind != detector_model)".into()));
        }
        let detector = d.require("detector")?;
        let kind = DetectorKind::parse(detector).ok_or_else(|| Error::Invalid(format!("unknown detector `{detector}`")))?;
        let n_features: usize = d.require_parsed("n_features")?;
        if n_features > d.len() {
            return Err(Error::Invalid("n_features exceeds the number of entries".into()));
        }
        let feature_names = (0..n_features)
            .map(|i| d.require(&format!("feature.{i}")).map(str::to_string))
            .collect::<Result<Vec<_>>>()?;
        let calibration = match d.require("calibration")? {
            "native" => Calibration::Native,
            "minmax" => Calibration::MinMax {
                lo: d.require_f64("calibration.lo")?,
                hi: d.require_f64("calibration.hi")?,
            },
            other => return Err(Error::Invalid(format!("unknown calibration `{other}`"))),
        };
        let vec_of = |key: &str, len: usize| -> Result<Vec<f64>> {
            let v = d.f64s(key)?;
            if v.len() != len {
                return Err(Error::Invalid(format!("`{key}` has {} values, expected {len}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!("`{key}` contains non-finite values")));
            }
            Ok(v)
        };
        let trees = || -> Result<Vec<Tree>> {
            let n: usize = d.require_parsed("n_trees")?;
            if n == 0 || n > d.len() {
                return Err(Error::Invalid(format!("bad tree count {n}")));
            }
            (0..n)
                .map(|t| Tree::decode(d.require(&format!("tree.{t}"))?, n_features))
                .collect()
        };
        let scaler = || -> Result<Scaler> {
            let s = Scaler {
                mean: vec_of("scaler.mean", n_features)?,
                scale: vec_of("scaler.scale", n_features)?,
            };
            if s.scale.contains(&0.0) {
                return Err(Error::Invalid("zero scale in scaler".into()));
            }
            Ok(s)
        };
        let params = match kind {
            DetectorKind::RandomForest => ModelParams::RandomForest { trees: trees()? },
            DetectorKind::Gbt => ModelParams::Gbt {
                base_score: d.require_f64("base_score")?,
                loss_trace: d.f64s("loss_trace")?,
                trees: trees()?,
            },
            DetectorKind::IsolationForest => {
                let subsample: usize = d.require_parsed("subsample")?;
                if subsample < 2 {
                    return Err(Error::Invalid("isolation forest subsample must be >= 2".into()));
                }
                ModelParams::IsolationForest {
                    subsample,
                    trees: trees()?,
                }
            }
            DetectorKind::Pca => {
                let k: usize = d.require_parsed("pca.n_components")?;
                if k == 0 || k > n_features {
                    return Err(Error::Invalid(format!("bad PCA component count {k}")));
                }
                ModelParams::Pca {
                    scaler: scaler()?,
                    fit: pca::PcaFit {
                        mean: vec_of("pca.mean", n_features)?,
                        eigenvalues: vec_of("pca.eigenvalues", k)?,
                        components: (0..k)
                            .map(|j| vec_of(&format!("pca.component.{j}"), n_features))
                            .collect::<Result<_>>()?,
                    },
                }
            }
            DetectorKind::KMeans => {
                let k: usize = d.require_parsed("kmeans.k")?;
                if k == 0 || k > d.len() {
                    return Err(Error::Invalid(format!("bad cluster count {k}")));
                }
                ModelParams::KMeans {
                    scaler: scaler()?,
                    centroids: (0..k)
                        .map(|j| vec_of(&format!("kmeans.centroid.{j}"), n_features))
                        .collect::<Result<_>>()?,
                }
            }
        };
        Ok(Self {
            feature_names,
            params,
            calibration,
        })
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_document(&Document::parse(text)?)
    }
}
