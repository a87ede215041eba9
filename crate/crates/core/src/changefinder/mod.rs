//! Two-stage ChangeFinder scoring on top of SDAR, change-point extraction
//! and segmentation.
//!
//! Stage one scores each sample against an online AR model; the scores are
//! smoothed with a trailing window of `smooth` samples. Stage two runs a
//! fresh SDAR model over the smoothed outlier scores, and its own scores,
//! smoothed again over `max(2, round(smooth / 2))` samples, form the change
//! score.

mod sdar;

use rayon::prelude::*;

pub use sdar::{levinson_durbin, SdarState, VARIANCE_FLOOR};

use crate::data_io::TimeSeriesFrame;
use crate::error::{Error, Result};
use crate::kvtext::Document;
use crate::stats;

/// How a change score is compared against `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// `score > m_t + threshold · s_t` with discounted running mean/std.
    #[default]
    Relative,
    /// `score > threshold`.
    Absolute,
}

impl ThresholdMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdMode::Relative => "relative",
            ThresholdMode::Absolute => "absolute",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relative" => Some(ThresholdMode::Relative),
            "absolute" => Some(ThresholdMode::Absolute),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeFinderConfig {
    pub r: f64,
    pub order: usize,
    pub smooth: usize,
    pub threshold: f64,
    /// Refractory period between change points; defaults to `smooth`.
    pub min_gap: usize,
    pub mode: ThresholdMode,
}

impl ChangeFinderConfig {
    pub fn new(r: f64, order: usize, smooth: usize, threshold: f64) -> Self {
        Self {
            r,
            order,
            smooth,
            threshold,
            min_gap: smooth,
            mode: ThresholdMode::Relative,
        }
    }

    /// Named preset `f1`, tuned for detection F1.
    pub fn preset_f1() -> Self {
        Self::new(0.05, 1, 5, 1.8)
    }

    /// Named preset `cs`, tuned for the change score.
    pub fn preset_cs() -> Self {
        Self::new(0.1, 1, 10, 1.5)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "f1" => Some(Self::preset_f1()),
            "cs" => Some(Self::preset_cs()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::Config(format!("changefinder: r = {} must lie in (0, 1)", self.r)));
        }
        if self.order < 1 || self.smooth < 2 || self.min_gap < 1 {
            return Err(Error::Config(
                "changefinder: need order >= 1, smooth >= 2, min_gap >= 1".into(),
            ));
        }
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::Config("changefinder: threshold must be > 0".into()));
        }
        Ok(())
    }

    /// Width of the second smoothing window.
    pub fn second_window(&self) -> usize {
        ((self.smooth as f64 / 2.0).round() as usize).max(2)
    }

    /// First index whose change score is fully warmed up.
    pub fn valid_from(&self) -> usize {
        2 * self.smooth + 2 * self.order
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::new();
        d.push_f64("r", self.r);
        d.push("order", self.order.to_string());
        d.push("smooth", self.smooth.to_string());
        d.push_f64("threshold", self.threshold);
        d.push("min_gap", self.min_gap.to_string());
        d.push("mode", self.mode.as_str());
        d
    }

    /// Reads `preset`, then any of `r`, `order`, `smooth`, `threshold`,
    /// `min_gap`, `mode` as overrides. Without a preset, `r`, `order`,
    /// `smooth` and `threshold` are required.
    pub fn from_document(d: &Document) -> Result<Self> {
        let mut c = match d.get("preset") {
            Some(p) => Self::preset(p)
                .ok_or_else(|| Error::Config(format!("unknown changefinder preset `{p}`")))?,
            None => Self::new(
                d.require_f64("r")?,
                d.require_parsed("order")?,
                d.require_parsed("smooth")?,
                d.require_f64("threshold")?,
            ),
        };
        if let Some(v) = d.f64("r")? {
            c.r = v;
        }
        if let Some(v) = d.parsed("order")? {
            c.order = v;
        }
        if let Some(v) = d.parsed("smooth")? {
            c.smooth = v;
            c.min_gap = v;
        }
        if let Some(v) = d.f64("threshold")? {
            c.threshold = v;
        }
        if let Some(v) = d.parsed("min_gap")? {
            c.min_gap = v;
        }
        if let Some(m) = d.get("mode") {
            c.mode = ThresholdMode::parse(m)
                .ok_or_else(|| Error::Config(format!("unknown threshold mode `{m}`")))?;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Per-sample ChangeFinder output. Entries before `valid_from` are warm-up.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub outlier_score: Vec<f64>,
    pub smoothed_outlier: Vec<f64>,
    pub change_score: Vec<f64>,
    pub valid_from: usize,
}

impl ScoreSeries {
    pub fn len(&self) -> usize {
        self.change_score.len()
    }

    pub fn is_empty(&self) -> bool {
        self.change_score.is_empty()
    }
}

/// Change points and the half-open segments they induce over `[0, n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub change_points: Vec<usize>,
    pub segments: Vec<(usize, usize)>,
    /// Index at which each change point was confirmed by the online
    /// detector (≥ the change point itself).
    pub confirmed_at: Vec<usize>,
}

impl Segmentation {
    /// Segments of `[0, n)` split at `change_points` (ascending, each in `1..n`).
    pub fn from_change_points(change_points: Vec<usize>, n: usize) -> Self {
        let confirmed_at = change_points.clone();
        Self::with_confirmation(change_points, confirmed_at, n)
    }

    pub fn with_confirmation(change_points: Vec<usize>, confirmed_at: Vec<usize>, n: usize) -> Self {
        debug_assert_eq!(change_points.len(), confirmed_at.len());
        let mut segments = Vec::with_capacity(change_points.len() + 1);
        let mut start = 0;
        for &c in &change_points {
            segments.push((start, c));
            start = c;
        }
        if n > 0 {
            segments.push((start, n));
        }
        Self {
            change_points,
            segments,
            confirmed_at,
        }
    }

    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.1)
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

fn run_sdar(series: &[f64], r: f64, order: usize) -> Result<Vec<f64>> {
    let mut state = SdarState::new(r, order)?;
    series.iter().map(|&x| state.update(x)).collect()
}

/// Univariate two-stage ChangeFinder scoring.
pub fn changefinder_score(series: &[f64], config: &ChangeFinderConfig) -> Result<ScoreSeries> {
    config.validate()?;
    let n = series.len();
    let needed = 2 * (config.smooth + config.order);
    if n <= needed {
        return Err(Error::TooShort { needed, got: n });
    }
    let k = config.order;
    let outlier_score = run_sdar(series, config.r, k)?;
    let smoothed_outlier = stats::trailing_mean(&outlier_score, config.smooth);

    // Stage two only sees smoothed values whose window holds no warm-up zeros.
    let stage2_start = k + config.smooth - 1;
    let stage2 = run_sdar(&smoothed_outlier[stage2_start..], config.r, k)?;
    let scored = &stage2[k..];
    let smoothed2 = stats::trailing_mean(scored, config.second_window());

    let valid_from = config.valid_from();
    let offset = stage2_start + k;
    let change_score = (0..n)
        .map(|t| if t < valid_from { 0.0 } else { smoothed2[t - offset] })
        .collect();
    Ok(ScoreSeries {
        outlier_score,
        smoothed_outlier,
        change_score,
        valid_from,
    })
}

/// Extracts change points from a score series.
///
/// In relative mode a discounted running mean `m` and standard deviation `s`
/// of the change score (rate `r`, current sample included) are tracked from
/// `valid_from` on and need `⌈1/r⌉` samples before detection is armed. A
/// sample is *above* when `score_t > m_t + threshold · s_t` (absolute mode:
/// `score_t > threshold`). A change point is reported at the first index of
/// every run of `confirm` consecutive above samples, provided it lies at
/// least `min_gap` after the previous change point.
pub fn detect_change_points(
    scores: &ScoreSeries,
    threshold: f64,
    min_gap: usize,
    confirm: usize,
    r: f64,
    mode: ThresholdMode,
) -> Segmentation {
    let cs = &scores.change_score;
    let n = cs.len();
    let confirm = confirm.max(1);
    let warmup = (1.0 / r).ceil() as usize;
    let mut points: Vec<usize> = Vec::new();
    let mut confirmed: Vec<usize> = Vec::new();
    let mut mean = 0.0f64;
    let mut var = 0.0f64;
    let mut seen = 0usize;
    let mut run = 0usize;
    for (t, &x) in cs.iter().enumerate().skip(scores.valid_from) {
        if seen == 0 {
            mean = x;
        } else {
            let d = x - mean;
            mean += r * d;
            var = (1.0 - r) * (var + r * d * d);
        }
        seen += 1;
        let above = match mode {
            ThresholdMode::Absolute => x > threshold,
            ThresholdMode::Relative => seen > warmup && x > mean + threshold * var.sqrt(),
        };
        run = if above { run + 1 } else { 0 };
        if run == confirm {
            let onset = t + 1 - confirm;
            if onset > 0 && points.last().is_none_or(|&p| onset - p >= min_gap) {
                points.push(onset);
                confirmed.push(t);
            }
        }
    }
    Segmentation::with_confirmation(points, confirmed, n)
}

impl ChangeFinderConfig {
    /// Runs [`detect_change_points`] with this configuration; the run length
    /// is the second smoothing window.
    pub fn detect(&self, scores: &ScoreSeries) -> Segmentation {
        detect_change_points(
            scores,
            self.threshold,
            self.min_gap,
            self.second_window(),
            self.r,
            self.mode,
        )
    }
}

/// Scores every channel independently, z-normalizes each over its
/// post-warm-up range and averages across channels in channel order.
pub fn score_multichannel(frame: &TimeSeriesFrame, config: &ChangeFinderConfig) -> Result<ScoreSeries> {
    if frame.n_channels() == 0 {
        return Err(Error::Invalid("no channels to score".into()));
    }
    let per_channel: Vec<ScoreSeries> = frame
        .columns()
        .par_iter()
        .map(|col| changefinder_score(col, config))
        .collect::<Result<_>>()?;
    let valid_from = config.valid_from();
    let n = frame.n_samples();
    let aggregate = |pick: fn(&ScoreSeries) -> &Vec<f64>| -> Vec<f64> {
        let mut acc = vec![0.0; n];
        for s in &per_channel {
            let z = z_normalize(pick(s), valid_from);
            for (a, v) in acc.iter_mut().zip(&z) {
                *a += v;
            }
        }
        let m = per_channel.len() as f64;
        acc.into_iter().map(|v| v / m).collect()
    };
    Ok(ScoreSeries {
        outlier_score: aggregate(|s| &s.outlier_score),
        smoothed_outlier: aggregate(|s| &s.smoothed_outlier),
        change_score: aggregate(|s| &s.change_score),
        valid_from,
    })
}

/// Standardizes `xs[from..]` by its own mean and population std; entries
/// before `from` (and everything, for a constant tail) become 0.
pub fn z_normalize(xs: &[f64], from: usize) -> Vec<f64> {
    let tail = &xs[from.min(xs.len())..];
    if tail.is_empty() {
        return vec![0.0; xs.len()];
    }
    let m = stats::mean(tail);
    let sd = stats::std_dev(tail);
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            if i < from || !(sd > 0.0) {
                0.0
            } else {
                (x - m) / sd
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn step_series(seed_: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed_);
        (0..1000)
            .map(|i| {
                let level = if i < 500 { 0.0 } else { 5.0 };
                level + 0.1 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }

    fn noise(seed_: u64, n: usize) -> Vec<f64> {
        let mut rng = seed::rng(seed_);
        (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }

    fn cfg(threshold: f64) -> ChangeFinderConfig {
        ChangeFinderConfig::new(0.05, 1, 5, threshold)
    }

    fn argmax(xs: &[f64]) -> usize {
        xs.iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
            .0
    }

    #[test]
    fn step_argmax_near_step() {
        let s = changefinder_score(&step_series(1), &cfg(3.0)).unwrap();
        let t = argmax(&s.change_score);
        assert!(t.abs_diff(500) <= 10, "argmax at {t}");
        assert_eq!(s.change_score.len(), 1000);
        assert_eq!(s.valid_from, 12);
    }

    fn hits(points: &[usize], at: usize, tol: usize) -> bool {
        points.iter().any(|p| p.abs_diff(at) <= tol)
    }

    #[test]
    fn step_at_threshold_three_gives_at_most_one_point_near_step() {
        let c = cfg(3.0);
        let (mut near, mut stray) = (0, 0);
        for seed_ in 0..30 {
            let s = changefinder_score(&step_series(seed_), &c).unwrap();
            let seg = c.detect(&s);
            assert_eq!(seg.segments.len(), seg.change_points.len() + 1);
            let n_near = seg.change_points.iter().filter(|p| p.abs_diff(500) <= 10).count();
            assert!(n_near <= 1, "{:?}", seg.change_points);
            near += n_near;
            stray += seg.change_points.len() - n_near;
        }
        assert!(near >= 18, "step found in {near}/30");
        assert!(stray <= 3, "{stray} stray points");
    }

    #[test]
    fn two_steps_are_both_found() {
        let mut found = [0; 2];
        for seed_ in 0..20 {
            let mut rng = seed::rng(900 + seed_);
            let xs: Vec<f64> = (0..1200)
                .map(|i| {
                    let level = if (400..800).contains(&i) { 5.0 } else { 0.0 };
                    level + 0.1 * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            let mut c = cfg(1.8);
            c.min_gap = 10;
            let seg = c.detect(&changefinder_score(&xs, &c).unwrap());
            for (k, at) in [400, 800].into_iter().enumerate() {
                found[k] += usize::from(hits(&seg.change_points, at, 10));
            }
        }
        assert!(found.iter().all(|&f| f >= 19), "{found:?}");
    }

    #[test]
    fn white_noise_rarely_fires_at_threshold_three() {
        let c = cfg(3.0);
        let total: usize = (0..20)
            .map(|seed_| {
                let s = changefinder_score(&noise(40 + seed_, 5000), &c).unwrap();
                c.detect(&s).change_points.len()
            })
            .sum();
        assert!(total <= 20, "{total} false change points over 20 series");
    }

    #[test]
    fn constant_series_is_flat() {
        let s = changefinder_score(&vec![3.0; 400], &cfg(3.0)).unwrap();
        let tail = &s.change_score[s.valid_from..];
        let lo = tail.iter().cloned().fold(f64::MAX, f64::min);
        let hi = tail.iter().cloned().fold(f64::MIN, f64::max);
        assert!(hi - lo < 1e-9);
        let seg = detect_change_points(&s, 3.0, 5, 3, 0.05, ThresholdMode::Relative);
        assert!(seg.change_points.is_empty());
        assert_eq!(seg.segments, vec![(0, 400)]);
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(matches!(
            changefinder_score(&[1.0; 12], &cfg(3.0)),
            Err(Error::TooShort { .. })
        ));
        assert!(changefinder_score(&[1.0; 13], &cfg(3.0)).is_ok());
    }

    #[test]
    fn deterministic_scoring() {
        let xs = noise(5, 800);
        let a = changefinder_score(&xs, &cfg(2.0)).unwrap();
        let b = changefinder_score(&xs, &cfg(2.0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn absolute_mode() {
        let mut s = changefinder_score(&noise(6, 300), &cfg(2.0)).unwrap();
        s.change_score = vec![0.0; 300];
        s.change_score[100] = 5.0;
        let seg = detect_change_points(&s, 4.0, 5, 1, 0.05, ThresholdMode::Absolute);
        assert_eq!(seg.change_points, vec![100]);
        let seg = detect_change_points(&s, 4.0, 5, 2, 0.05, ThresholdMode::Absolute);
        assert!(seg.change_points.is_empty());
    }

    fn frame(cols: Vec<Vec<f64>>) -> TimeSeriesFrame {
        let n = cols[0].len();
        let names = (0..cols.len()).map(|i| format!("c{i}")).collect();
        TimeSeriesFrame::new((0..n as i64).collect(), names, cols).unwrap()
    }

    #[test]
    fn multichannel_single_and_duplicate() {
        let c = cfg(3.0);
        let xs = step_series(2);
        let uni = changefinder_score(&xs, &c).unwrap();
        let z = z_normalize(&uni.change_score, uni.valid_from);
        let one = score_multichannel(&frame(vec![xs.clone()]), &c).unwrap();
        assert_eq!(one.change_score, z);
        let two = score_multichannel(&frame(vec![xs.clone(), xs]), &c).unwrap();
        for (a, b) in two.change_score.iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn multichannel_step_in_one_of_five() {
        let c = cfg(3.0);
        let mut cols: Vec<Vec<f64>> = (0..4).map(|i| noise(100 + i, 1000)).collect();
        cols.insert(2, step_series(3));
        let agg = score_multichannel(&frame(cols), &c).unwrap();
        let t = argmax(&agg.change_score);
        assert!(t.abs_diff(500) <= 10, "argmax at {t}");
    }

    #[test]
    fn segmentation_partitions() {
        let seg = Segmentation::from_change_points(vec![3, 7], 10);
        assert_eq!(seg.segments, vec![(0, 3), (3, 7), (7, 10)]);
        assert_eq!(seg.len(), 10);
    }

    #[test]
    fn presets() {
        let f1 = ChangeFinderConfig::preset("f1").unwrap();
        assert_eq!((f1.r, f1.order, f1.smooth, f1.threshold), (0.05, 1, 5, 1.8));
        let cs = ChangeFinderConfig::preset("cs").unwrap();
        assert_eq!((cs.r, cs.order, cs.smooth, cs.threshold), (0.1, 1, 10, 1.5));
        assert!(ChangeFinderConfig::preset("nope").is_none());
        let back = ChangeFinderConfig::from_document(&cs.to_document()).unwrap();
        assert_eq!(back, cs);
    }
}
