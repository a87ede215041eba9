//! Cleaning, shape-aware normalization and relevance/collinearity feature
//! selection, captured in a [`PrepPlan`] that is fitted once on training
//! data and replayed verbatim on anything else.

mod relevance;
mod transform;

use std::cmp::Ordering;

use rayon::prelude::*;

pub use relevance::{anova_f, mutual_info};
pub use transform::{
    classify_distribution, fit_yeo_johnson, winsorize, winsorize_fit, yeo_johnson,
    yeo_johnson_log_likelihood, ShapeClass, ShapeThresholds,
};

use crate::data_io::TimeSeriesFrame;
use crate::error::{Error, Result};
use crate::kvtext::{fmt_f64, parse_f64, Document};
use crate::stats;

pub const PLAN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PrepConfig {
    pub shape: ShapeThresholds,
    pub winsor_lo: f64,
    pub winsor_hi: f64,
    pub mi_bins: usize,
    pub top_k: usize,
    pub collinearity_threshold: f64,
    pub variance_floor: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            shape: ShapeThresholds::default(),
            winsor_lo: 0.01,
            winsor_hi: 0.99,
            mi_bins: 16,
            top_k: 20,
            collinearity_threshold: 0.95,
            variance_floor: 1e-8,
        }
    }
}

impl PrepConfig {
    pub fn to_document(&self) -> Document {
        let mut d = Document::new();
        d.push_f64("skew_moderate", self.shape.skew_moderate);
        d.push_f64("skew_heavy", self.shape.skew_heavy);
        d.push_f64("kurtosis_gate", self.shape.kurtosis_gate);
        d.push_f64("winsor_lo", self.winsor_lo);
        d.push_f64("winsor_hi", self.winsor_hi);
        d.push("mi_bins", self.mi_bins.to_string());
        d.push("top_k", self.top_k.to_string());
        d.push_f64("collinearity_threshold", self.collinearity_threshold);
        d.push_f64("variance_floor", self.variance_floor);
        d
    }

    /// Absent keys keep their defaults.
    pub fn from_document(d: &Document) -> Result<Self> {
        let mut c = PrepConfig::default();
        if let Some(v) = d.f64("skew_moderate")? {
            c.shape.skew_moderate = v;
        }
        if let Some(v) = d.f64("skew_heavy")? {
            c.shape.skew_heavy = v;
        }
        if let Some(v) = d.f64("kurtosis_gate")? {
            c.shape.kurtosis_gate = v;
        }
        if let Some(v) = d.f64("winsor_lo")? {
            c.winsor_lo = v;
        }
        if let Some(v) = d.f64("winsor_hi")? {
            c.winsor_hi = v;
        }
        if let Some(v) = d.parsed("mi_bins")? {
            c.mi_bins = v;
        }
        if let Some(v) = d.parsed("top_k")? {
            c.top_k = v;
        }
        if let Some(v) = d.f64("collinearity_threshold")? {
            c.collinearity_threshold = v;
        }
        if let Some(v) = d.f64("variance_floor")? {
            c.variance_floor = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.winsor_lo && self.winsor_lo < self.winsor_hi && self.winsor_hi <= 1.0) {
            return Err(Error::Config("prep: need 0 <= winsor_lo < winsor_hi <= 1".into()));
        }
        if self.mi_bins < 2 || self.top_k < 1 {
            return Err(Error::Config("prep: mi_bins >= 2 and top_k >= 1 required".into()));
        }
        if !(self.collinearity_threshold > 0.0 && self.collinearity_threshold <= 1.0) {
            return Err(Error::Config("prep: collinearity_threshold must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformKind {
    Identity,
    YeoJohnson { lambda: f64 },
    Winsorize { lo: f64, hi: f64 },
    WinsorizeYeoJohnson { lo: f64, hi: f64, lambda: f64 },
}

impl TransformKind {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            TransformKind::Identity => x,
            TransformKind::YeoJohnson { lambda } => yeo_johnson(lambda, x),
            TransformKind::Winsorize { lo, hi } => winsorize(x, lo, hi),
            TransformKind::WinsorizeYeoJohnson { lo, hi, lambda } => {
                yeo_johnson(lambda, winsorize(x, lo, hi))
            }
        }
    }

    fn encode(&self) -> String {
        match *self {
            TransformKind::Identity => "identity".into(),
            TransformKind::YeoJohnson { lambda } => format!("yeo_johnson {}", fmt_f64(lambda)),
            TransformKind::Winsorize { lo, hi } => {
                format!("winsorize {} {}", fmt_f64(lo), fmt_f64(hi))
            }
            TransformKind::WinsorizeYeoJohnson { lo, hi, lambda } => format!(
                "winsorize_yeo_johnson {} {} {}",
                fmt_f64(lo),
                fmt_f64(hi),
                fmt_f64(lambda)
            ),
        }
    }

    fn decode(s: &str) -> Option<Self> {
        let mut it = s.split_whitespace();
        let kind = it.next()?;
        let nums: Vec<f64> = it.map(parse_f64).collect::<Option<_>>()?;
        let t = match (kind, nums.as_slice()) {
            ("identity", []) => TransformKind::Identity,
            ("yeo_johnson", &[lambda]) => TransformKind::YeoJohnson { lambda },
            ("winsorize", &[lo, hi]) if lo <= hi => TransformKind::Winsorize { lo, hi },
            ("winsorize_yeo_johnson", &[lo, hi, lambda]) if lo <= hi => {
                TransformKind::WinsorizeYeoJohnson { lo, hi, lambda }
            }
            _ => return None,
        };
        Some(t)
    }
}

/// Median imputation followed by the shape-selected transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnTransform {
    pub kind: TransformKind,
    pub impute_median: f64,
}

impl ColumnTransform {
    /// Missing and negative readings take the stored median, then the
    /// transform is applied.
    pub fn apply(&self, x: f64) -> f64 {
        let x = if x.is_nan() || x < 0.0 { self.impute_median } else { x };
        self.kind.apply(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlan {
    pub name: String,
    pub shape: ShapeClass,
    pub transform: ColumnTransform,
    /// `None` when the channel failed the variance gate before scoring.
    pub scores: Option<(f64, f64)>,
}

/// Result of [`clean`]: dropped channels and the imputation medians of the
/// survivors, in frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanRecord {
    pub dropped_null_channels: Vec<String>,
    pub medians: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepPlan {
    pub config: PrepConfig,
    pub dropped_null_channels: Vec<String>,
    /// Every channel that survived cleaning, in frame order.
    pub channels: Vec<ChannelPlan>,
    pub variance_dropped: Vec<String>,
    pub collinearity_dropped: Vec<String>,
    /// Output channels, in frame order.
    pub selected_channels: Vec<String>,
}

/// Median of the non-missing, non-negative readings; 0 when there are none.
fn cleaning_median(column: &[f64]) -> f64 {
    let ok: Vec<f64> = column.iter().copied().filter(|v| *v >= 0.0).collect();
    if ok.is_empty() {
        0.0
    } else {
        stats::median(&ok)
    }
}

/// Drops all-missing channels and replaces missing and negative readings
/// with the per-channel median of the valid readings.
pub fn clean(frame: &TimeSeriesFrame) -> Result<(TimeSeriesFrame, CleanRecord)> {
    if frame.n_samples() == 0 {
        return Err(Error::Empty("cannot clean an empty frame"));
    }
    let mut dropped = Vec::new();
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut medians = Vec::new();
    for (name, col) in frame.channels().iter().zip(frame.columns()) {
        if col.iter().all(|v| v.is_nan()) {
            dropped.push(name.clone());
            continue;
        }
        let m = cleaning_median(col);
        columns.push(
            col.iter()
                .map(|&v| if v.is_nan() || v < 0.0 { m } else { v })
                .collect::<Vec<_>>(),
        );
        names.push(name.clone());
        medians.push((name.clone(), m));
    }
    if names.is_empty() {
        return Err(Error::Degenerate("every channel is entirely missing".into()));
    }
    let cleaned = frame.with_columns(names, columns)?;
    Ok((
        cleaned,
        CleanRecord {
            dropped_null_channels: dropped,
            medians,
        },
    ))
}

fn choose_transform(column: &[f64], config: &PrepConfig) -> Result<(ShapeClass, TransformKind)> {
    let shape = classify_distribution(column, &config.shape)?;
    let kind = match shape {
        ShapeClass::NearSymmetric => TransformKind::Identity,
        ShapeClass::ModeratelySkewed => match fit_yeo_johnson(column) {
            Ok(lambda) => TransformKind::YeoJohnson { lambda },
            Err(_) => TransformKind::Identity,
        },
        ShapeClass::HeavilySkewed => {
            let (lo, hi) = winsorize_fit(column, config.winsor_lo, config.winsor_hi)?;
            let clipped: Vec<f64> = column.iter().map(|&x| winsorize(x, lo, hi)).collect();
            match fit_yeo_johnson(&clipped) {
                Ok(lambda) => TransformKind::WinsorizeYeoJohnson { lo, hi, lambda },
                Err(_) => TransformKind::Winsorize { lo, hi },
            }
        }
    };
    Ok((shape, kind))
}

/// Orders channels strongest first: MI, then ANOVA-F (both descending),
/// then name ascending.
fn strength_order(a: &(String, f64, f64), b: &(String, f64, f64)) -> Ordering {
    b.2.total_cmp(&a.2)
        .then(b.1.total_cmp(&a.1))
        .then_with(|| a.0.cmp(&b.0))
}

/// Fits the full preparation plan on a labeled training frame
/// (`labels[i] == true` means normal).
pub fn fit_prep(frame: &TimeSeriesFrame, labels: &[bool], config: &PrepConfig) -> Result<PrepPlan> {
    config.validate()?;
    if labels.len() != frame.n_samples() {
        return Err(Error::Dimension {
            expected: frame.n_samples(),
            got: labels.len(),
        });
    }
    let (cleaned, record) = clean(frame)?;
    let target: Vec<bool> = labels.iter().map(|l| !l).collect();

    struct Fitted {
        plan: ChannelPlan,
        transformed: Vec<f64>,
    }
    let fitted: Vec<Fitted> = cleaned
        .channels()
        .par_iter()
        .zip(cleaned.columns().par_iter())
        .zip(record.medians.par_iter())
        .map(|((name, col), (_, median))| -> Result<Fitted> {
            let (shape, kind) = choose_transform(col, config)?;
            let transform = ColumnTransform {
                kind,
                impute_median: *median,
            };
            let transformed: Vec<f64> = col.iter().map(|&x| kind.apply(x)).collect();
            let scores = if stats::variance(&transformed) < config.variance_floor {
                None
            } else {
                Some((
                    anova_f(&transformed, &target)?,
                    mutual_info(&transformed, &target, config.mi_bins)?,
                ))
            };
            Ok(Fitted {
                plan: ChannelPlan {
                    name: name.clone(),
                    shape,
                    transform,
                    scores,
                },
                transformed,
            })
        })
        .collect::<Result<_>>()?;

    let variance_dropped: Vec<String> = fitted
        .iter()
        .filter(|f| f.plan.scores.is_none())
        .map(|f| f.plan.name.clone())
        .collect();
    let scored: Vec<(String, f64, f64)> = fitted
        .iter()
        .filter_map(|f| {
            f.plan.scores.map(|(fv, mi)| {
                let fv = if fv.is_nan() { 0.0 } else { fv };
                (f.plan.name.clone(), fv, mi)
            })
        })
        .collect();

    // Union of the top-k by each score.
    let mut by_f = scored.clone();
    by_f.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut by_mi = scored.clone();
    by_mi.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    let mut candidates: Vec<(String, f64, f64)> = Vec::new();
    for c in by_f.iter().take(config.top_k).chain(by_mi.iter().take(config.top_k)) {
        if !candidates.iter().any(|x| x.0 == c.0) {
            candidates.push(c.clone());
        }
    }

    // Greedy collinearity pruning, strongest first: a channel is kept only if
    // it is not too correlated with any stronger kept channel.
    candidates.sort_by(strength_order);
    let column_of = |name: &str| -> &[f64] {
        &fitted.iter().find(|f| f.plan.name == name).unwrap().transformed
    };
    let mut kept: Vec<String> = Vec::new();
    let mut collinearity_dropped = Vec::new();
    for (name, _, _) in &candidates {
        let col = column_of(name);
        let clash = kept
            .iter()
            .any(|k| stats::pearson(col, column_of(k)).abs() > config.collinearity_threshold);
        if clash {
            collinearity_dropped.push(name.clone());
        } else {
            kept.push(name.clone());
        }
    }
    collinearity_dropped.sort();

    let selected_channels: Vec<String> = cleaned
        .channels()
        .iter()
        .filter(|c| kept.contains(c))
        .cloned()
        .collect();
    if selected_channels.len() < 2 {
        return Err(Error::Degenerate(format!(
            "feature selection left {} channel(s); at least 2 are required",
            selected_channels.len()
        )));
    }
    Ok(PrepPlan {
        config: config.clone(),
        dropped_null_channels: record.dropped_null_channels,
        channels: fitted.into_iter().map(|f| f.plan).collect(),
        variance_dropped,
        collinearity_dropped,
        selected_channels,
    })
}

/// Replays a fitted plan with no refitting.
pub fn apply_prep(plan: &PrepPlan, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
    let mut columns = Vec::with_capacity(plan.selected_channels.len());
    for name in &plan.selected_channels {
        let col = frame
            .channel(name)
            .ok_or_else(|| Error::MissingChannel(name.clone()))?;
        let cp = plan
            .channel(name)
            .ok_or_else(|| Error::Invalid(format!("plan has no record for `{name}`")))?;
        columns.push(col.iter().map(|&x| cp.transform.apply(x)).collect());
    }
    frame.with_columns(plan.selected_channels.clone(), columns)
}

impl PrepPlan {
    pub fn channel(&self, name: &str) -> Option<&ChannelPlan> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::new();
        d.push("schema_version", PLAN_SCHEMA_VERSION.to_string());
        d.push("kind", "prep_plan");
        d.extend_prefixed("config", &self.config.to_document());
        d.push("channel_count", self.channels.len().to_string());
        for (i, c) in self.channels.iter().enumerate() {
            let p = format!("channel.{i}");
            d.push(format!("{p}.name"), c.name.clone());
            d.push(format!("{p}.shape"), c.shape.as_str());
            d.push_f64(format!("{p}.median"), c.transform.impute_median);
            d.push(format!("{p}.transform"), c.transform.kind.encode());
            match c.scores {
                Some((f, mi)) => d.push_f64s(format!("{p}.scores"), &[f, mi]),
                None => d.push(format!("{p}.scores"), "none"),
            }
        }
        let names = |v: &[String]| v.join(",");
        d.push("dropped_null_channels", names(&self.dropped_null_channels));
        d.push("variance_dropped", names(&self.variance_dropped));
        d.push("collinearity_dropped", names(&self.collinearity_dropped));
        d.push("selected_channels", names(&self.selected_channels));
        d
    }

    pub fn to_text(&self) -> String {
        self.to_document().to_text()
    }

    pub fn from_document(d: &Document) -> Result<Self> {
        d.expect_schema(PLAN_SCHEMA_VERSION)?;
        if d.require("kind")? != "prep_plan" {
            return Err(Error::Schema {
                expected: "prep_plan".into(),
                found: d.require("kind")?.into(),
            });
        }
        let config = PrepConfig::from_document(&d.section("config"))?;
        let count: usize = d.require_parsed("channel_count")?;
        if count > d.len() {
            return Err(Error::Config("channel_count exceeds the number of entries".into()));
        }
        let mut channels = Vec::with_capacity(count);
        for i in 0..count {
            let p = format!("channel.{i}");
            let name = d.require(&format!("{p}.name"))?.to_string();
            let shape = ShapeClass::parse(d.require(&format!("{p}.shape"))?)
                .ok_or_else(|| Error::Config(format!("{p}.shape: unknown class")))?;
            let impute_median = d.require_f64(&format!("{p}.median"))?;
            let kind = TransformKind::decode(d.require(&format!("{p}.transform"))?)
                .ok_or_else(|| Error::Config(format!("{p}.transform: malformed")))?;
            let scores = match d.require(&format!("{p}.scores"))? {
                "none" => None,
                _ => match d.f64s(&format!("{p}.scores"))?.as_slice() {
                    &[f, mi] => Some((f, mi)),
                    _ => return Err(Error::Config(format!("{p}.scores: expected two numbers"))),
                },
            };
            channels.push(ChannelPlan {
                name,
                shape,
                transform: ColumnTransform { kind, impute_median },
                scores,
            });
        }
        let names = |key: &str| -> Result<Vec<String>> {
            Ok(d.list(key)
                .ok_or_else(|| Error::Config(format!("missing key `{key}`")))?
                .into_iter()
                .map(String::from)
                .collect())
        };
        let plan = PrepPlan {
            config,
            dropped_null_channels: names("dropped_null_channels")?,
            channels,
            variance_dropped: names("variance_dropped")?,
            collinearity_dropped: names("collinearity_dropped")?,
            selected_channels: names("selected_channels")?,
        };
        for s in &plan.selected_channels {
            if plan.channel(s).is_none() {
                return Err(Error::Config(format!("selected channel `{s}` has no record")));
            }
        }
        Ok(plan)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_document(&Document::parse(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::{Exp, StandardNormal};

    fn frame(cols: Vec<(&str, Vec<f64>)>) -> TimeSeriesFrame {
        let n = cols[0].1.len();
        let (names, values): (Vec<String>, Vec<Vec<f64>>) =
            cols.into_iter().map(|(n, v)| (n.to_string(), v)).unzip();
        TimeSeriesFrame::new((0..n as i64).collect(), names, values).unwrap()
    }

    fn synthetic(n: usize, seed_: u64) -> (TimeSeriesFrame, Vec<bool>) {
        let mut rng = seed::rng(seed_);
        let labels: Vec<bool> = (0..n).map(|i| (i / 50) % 5 != 0).collect();
        let exp = Exp::new(1.0).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut c = Vec::new();
        for &l in &labels {
            let shift = if l { 0.0 } else { 1.5 };
            a.push(10.0 + shift + rng.sample::<f64, _>(StandardNormal));
            b.push(rng.sample::<f64, _>(exp) * (1.0 + shift));
            c.push(5.0 + rng.sample::<f64, _>(StandardNormal));
        }
        (frame(vec![("a", a), ("b", b), ("c", c)]), labels)
    }

    #[test]
    fn clean_examples() {
        let f = frame(vec![
            ("x", vec![1.0, -5.0, 3.0, f64::NAN]),
            ("dead", vec![f64::NAN; 4]),
            ("flat", vec![4.0, 4.0, 4.0, 4.0]),
        ]);
        let (cleaned, rec) = clean(&f).unwrap();
        assert_eq!(cleaned.channel("x").unwrap(), &[1.0, 2.0, 3.0, 2.0]);
        assert_eq!(cleaned.channel("flat").unwrap(), &[4.0; 4]);
        assert_eq!(rec.dropped_null_channels, vec!["dead".to_string()]);
        assert!(cleaned.channel("dead").is_none());

        let all_dead = frame(vec![("d", vec![f64::NAN; 3])]);
        assert!(clean(&all_dead).is_err());
    }

    #[test]
    fn duplicate_and_constant_channels() {
        let (f, labels) = synthetic(2000, 1);
        let a = f.channel("a").unwrap().to_vec();
        let f = frame(vec![
            ("a", a.clone()),
            ("a_copy", a),
            ("b", f.channel("b").unwrap().to_vec()),
            ("c", f.channel("c").unwrap().to_vec()),
            ("konst", vec![7.0; 2000]),
        ]);
        let plan = fit_prep(&f, &labels, &PrepConfig::default()).unwrap();
        let has = |n: &str| plan.selected_channels.iter().any(|s| s == n);
        assert!(has("a") ^ has("a_copy"), "{:?}", plan.selected_channels);
        assert!(!has("konst"));
        assert_eq!(plan.variance_dropped, vec!["konst".to_string()]);
        assert_eq!(plan.collinearity_dropped.len(), 1);
    }

    #[test]
    fn label_copy_ranks_first_and_survives() {
        let (f, labels) = synthetic(2000, 2);
        let oracle: Vec<f64> = labels.iter().map(|&l| if l { 0.0 } else { 1.0 }).collect();
        let f = frame(vec![
            ("a", f.channel("a").unwrap().to_vec()),
            ("b", f.channel("b").unwrap().to_vec()),
            ("c", f.channel("c").unwrap().to_vec()),
            ("oracle", oracle.clone()),
        ]);
        let plan = fit_prep(&f, &labels, &PrepConfig::default()).unwrap();
        let target: Vec<bool> = labels.iter().map(|l| !l).collect();
        let oracle_f = anova_f(&oracle, &target).unwrap();
        let oracle_mi = mutual_info(&oracle, &target, 16).unwrap();
        for c in &plan.channels {
            let (fv, mi) = c.scores.unwrap();
            if c.name != "oracle" {
                assert!(fv < oracle_f && mi < oracle_mi, "{} beat the oracle", c.name);
            }
        }
        assert_eq!(oracle_f, f64::INFINITY);
        assert!(plan.selected_channels.iter().any(|s| s == "oracle"));
    }

    #[test]
    fn skewed_channel_gets_transformed() {
        let (f, labels) = synthetic(3000, 3);
        let plan = fit_prep(&f, &labels, &PrepConfig::default()).unwrap();
        let b = plan.channel("b").unwrap();
        assert_ne!(b.shape, ShapeClass::NearSymmetric);
        assert!(!matches!(b.transform.kind, TransformKind::Identity));
        assert_eq!(plan.channel("c").unwrap().shape, ShapeClass::NearSymmetric);
    }

    #[test]
    fn selected_pairs_respect_collinearity_threshold() {
        let (f, labels) = synthetic(1500, 4);
        let a = f.channel("a").unwrap().to_vec();
        let noisy: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + 0.01 * (i % 7) as f64).collect();
        let f = frame(vec![("a", a), ("a2", noisy), ("c", f.channel("c").unwrap().to_vec())]);
        let plan = fit_prep(&f, &labels, &PrepConfig::default()).unwrap();
        let out = apply_prep(&plan, &f).unwrap();
        for i in 0..out.n_channels() {
            for j in i + 1..out.n_channels() {
                assert!(stats::pearson(out.column(i), out.column(j)).abs() <= 0.95);
            }
        }
    }

    #[test]
    fn apply_uses_training_median_and_is_deterministic() {
        let (f, labels) = synthetic(1000, 5);
        let plan = fit_prep(&f, &labels, &PrepConfig::default()).unwrap();
        let once = apply_prep(&plan, &f).unwrap();
        let twice = apply_prep(&plan, &f).unwrap();
        assert_eq!(once, twice);

        let mut test_cols: Vec<(&str, Vec<f64>)> = vec![
            ("a", vec![-3.0, f64::NAN, 11.0]),
            ("b", vec![0.5, 0.5, 0.5]),
            ("c", vec![5.0, 5.0, 5.0]),
        ];
        let test = frame(std::mem::take(&mut test_cols));
        let out = apply_prep(&plan, &test).unwrap();
        let a = plan.channel("a").unwrap().transform;
        let expect = a.kind.apply(a.impute_median);
        assert_eq!(out.channel("a").unwrap()[0], expect);
        assert_eq!(out.channel("a").unwrap()[1], expect);

        let missing = frame(vec![("a", vec![1.0; 3]), ("b", vec![1.0; 3])]);
        assert!(matches!(apply_prep(&plan, &missing), Err(Error::MissingChannel(_))));
    }

    #[test]
    fn plan_text_round_trip_is_lossless() {
        let (f, labels) = synthetic(1200, 6);
        let plan = fit_prep(&f, &labels, &PrepConfig::default()).unwrap();
        let text = plan.to_text();
        let back = PrepPlan::from_text(&text).unwrap();
        assert_eq!(back, plan);
        assert_eq!(back.to_text(), text);
        assert_eq!(apply_prep(&back, &f).unwrap(), apply_prep(&plan, &f).unwrap());
    }

    #[test]
    fn plan_rejects_wrong_schema() {
        let (f, labels) = synthetic(600, 7);
        let plan = fit_prep(&f, &labels, &PrepConfig::default()).unwrap();
        let text = plan.to_text().replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(PrepPlan::from_text(&text), Err(Error::Schema { .. })));
    }

    #[test]
    fn too_few_survivors_is_an_error() {
        let labels: Vec<bool> = (0..100).map(|i| i % 3 != 0).collect();
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let f = frame(vec![("x", x.clone()), ("x2", x), ("k", vec![1.0; 100])]);
        assert!(fit_prep(&f, &labels, &PrepConfig::default()).is_err());
    }
}
