//! Parallel grid search over ChangeFinder parameters.
//!
//! Every `(r, order, smooth)` triple is scored once with
//! [`score_multichannel`]; each threshold is then a cheap detection pass.
//! Cells are evaluated on the rayon pool and the leaderboard is put in a
//! canonical order afterwards, so the output never depends on thread count.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;

use crate::changefinder::{score_multichannel, ChangeFinderConfig, ScoreSeries, ThresholdMode};
use crate::data_io::TimeSeriesFrame;
use crate::error::{Error, Result};
use crate::kvtext::{fmt_f64, parse_f64, Document};
use crate::stats;

pub const GRID_SCHEMA_VERSION: u32 = 1;

/// Indices where the label flips from normal (`true`) to anomalous.
pub fn transitions_from_labels(labels: &[bool]) -> Vec<usize> {
    labels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] && !w[1])
        .map(|(i, _)| i + 1)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
}

/// Greedy one-to-one matching of predictions to truths within `tolerance`
/// samples, closest pairs first (ties: earlier truth, then earlier
/// prediction).
pub fn detection_f1(predicted: &[usize], truth: &[usize], tolerance: usize) -> DetectionScore {
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (ti, &t) in truth.iter().enumerate() {
        for (pi, &p) in predicted.iter().enumerate() {
            let d = t.abs_diff(p);
            if d <= tolerance {
                pairs.push((d, ti, pi));
            }
        }
    }
    pairs.sort_unstable();
    let mut truth_used = vec![false; truth.len()];
    let mut pred_used = vec![false; predicted.len()];
    let mut tp = 0;
    for (_, ti, pi) in pairs {
        if !truth_used[ti] && !pred_used[pi] {
            truth_used[ti] = true;
            pred_used[pi] = true;
            tp += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, predicted.len());
    let recall = ratio(tp, truth.len());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionScore {
        precision,
        recall,
        f1,
        true_positives: tp,
    }
}

/// Windowed-peak signal-to-noise of a change score: the mean over truths of
/// the peak score within `±tolerance`, minus the mean score outside every
/// window, divided by the outside standard deviation. Only indices from
/// `valid_from` on are considered.
pub fn change_score_metric(scores: &ScoreSeries, truth: &[usize], tolerance: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Empty("CS undefined: no truth transitions"));
    }
    let cs = &scores.change_score;
    let n = cs.len();
    let from = scores.valid_from.min(n);
    let mut inside = vec![false; n];
    let mut peaks = Vec::with_capacity(truth.len());
    for &t in truth {
        let lo = t.saturating_sub(tolerance).max(from);
        let hi = (t + tolerance + 1).min(n);
        if lo >= hi {
            continue;
        }
        inside[lo..hi].iter_mut().for_each(|b| *b = true);
        peaks.push(cs[lo..hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    if peaks.is_empty() {
        return Err(Error::Empty("CS undefined: no truth transition inside the scored range"));
    }
    let outside: Vec<f64> = (from..n).filter(|&i| !inside[i]).map(|i| cs[i]).collect();
    if outside.is_empty() {
        return Err(Error::Empty("CS undefined: no samples outside the truth windows"));
    }
    let signal = stats::mean(&peaks) - stats::mean(&outside);
    Ok(signal / (stats::std_dev(&outside) + 1e-12))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    F1,
    Cs,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::F1 => "f1",
            Objective::Cs => "cs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f1" => Some(Objective::F1),
            "cs" => Some(Objective::Cs),
            _ => None,
        }
    }
}

/// The four value lists of a grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub r_values: Vec<f64>,
    pub order_values: Vec<usize>,
    pub smooth_values: Vec<usize>,
    pub threshold_values: Vec<f64>,
}

impl ParamGrid {
    pub fn validate(&self) -> Result<()> {
        if self.r_values.is_empty()
            || self.order_values.is_empty()
            || self.smooth_values.is_empty()
            || self.threshold_values.is_empty()
        {
            return Err(Error::Config("every grid list must be non-empty".into()));
        }
        for c in self.cells() {
            c.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.r_values.len() * self.order_values.len() * self.smooth_values.len() * self.threshold_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All cells in lexicographic list order.
    pub fn cells(&self) -> Vec<ChangeFinderConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &r in &self.r_values {
            for &order in &self.order_values {
                for &smooth in &self.smooth_values {
                    for &threshold in &self.threshold_values {
                        out.push(ChangeFinderConfig::new(r, order, smooth, threshold));
                    }
                }
            }
        }
        out
    }

    pub fn to_document(&self) -> Document {
        let join_f = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ");
        let join_u = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut d = Document::new();
        d.push("schema_version", GRID_SCHEMA_VERSION.to_string());
        d.push("kind", "param_grid");
        d.push("r", join_f(&self.r_values));
        d.push("order", join_u(&self.order_values));
        d.push("smooth", join_u(&self.smooth_values));
        d.push("threshold", join_f(&self.threshold_values));
        d
    }

    /// Reads comma-separated `r`, `order`, `smooth` and `threshold` lists.
    /// `schema_version`, when present, must match.
    pub fn from_document(d: &Document) -> Result<Self> {
        if d.contains("schema_version") {
            d.expect_schema(GRID_SCHEMA_VERSION)?;
        }
        fn items<T>(d: &Document, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
            let raw = d
                .list(key)
                .ok_or_else(|| Error::Config(format!("grid file is missing `{key}`")))?;
            raw.into_iter()
                .map(|s| parse(s).ok_or_else(|| Error::Config(format!("bad `{key}` value `{s}`"))))
                .collect()
        }
        let grid = Self {
            r_values: items(d, "r", parse_f64)?,
            order_values: items(d, "order", |s| s.parse().ok())?,
            smooth_values: items(d, "smooth", |s| s.parse().ok())?,
            threshold_values: items(d, "threshold", parse_f64)?,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_document(&Document::parse(text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRow {
    pub config: ChangeFinderConfig,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub cs: f64,
    pub n_change_points: usize,
    /// Set when the cell could not be evaluated; its metrics are `-inf`.
    pub error: Option<String>,
}

impl LeaderboardRow {
    fn failed(config: ChangeFinderConfig, err: &Error) -> Self {
        Self {
            config,
            f1: f64::NEG_INFINITY,
            precision: f64::NEG_INFINITY,
            recall: f64::NEG_INFINITY,
            cs: f64::NEG_INFINITY,
            n_change_points: 0,
            error: Some(err.to_string()),
        }
    }

    pub fn objective(&self, objective: Objective) -> f64 {
        match objective {
            Objective::F1 => self.f1,
            Objective::Cs => self.cs,
        }
    }
}

fn key_cmp(a: &ChangeFinderConfig, b: &ChangeFinderConfig) -> Ordering {
    a.r.total_cmp(&b.r)
        .then(a.order.cmp(&b.order))
        .then(a.smooth.cmp(&b.smooth))
        .then(a.threshold.total_cmp(&b.threshold))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaderboard {
    pub objective: Objective,
    pub rows: Vec<LeaderboardRow>,
}

impl Leaderboard {
    /// Sorts descending by the objective; ties go to the lexicographically
    /// smaller `(r, order, smooth, threshold)`.
    pub fn new(objective: Objective, mut rows: Vec<LeaderboardRow>) -> Self {
        rows.sort_by(|a, b| {
            let (x, y) = (a.objective(objective), b.objective(objective));
            let x = if x.is_nan() { f64::NEG_INFINITY } else { x };
            let y = if y.is_nan() { f64::NEG_INFINITY } else { y };
            y.total_cmp(&x).then_with(|| key_cmp(&a.config, &b.config))
        });
        Self { objective, rows }
    }

    pub fn best(&self) -> Option<&LeaderboardRow> {
        self.rows.first().filter(|r| r.error.is_none())
    }

    pub const CSV_HEADER: &'static str = "r,order,smooth,threshold,f1,cs,n_change_points";

    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for row in &self.rows {
            let c = &row.config;
            writeln!(
                out,
                "{:?},{},{},{:?},{:?},{:?},{}",
                c.r, c.order, c.smooth, c.threshold, row.f1, row.cs, row.n_change_points
            )?;
        }
        Ok(())
    }
}

/// Settings shared by every grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub objective: Objective,
    /// Matching tolerance in samples; `None` means `2 · smooth` per cell.
    pub tolerance: Option<usize>,
    /// Refractory period; `None` means `smooth` per cell.
    pub min_gap: Option<usize>,
    pub mode: ThresholdMode,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            objective: Objective::F1,
            tolerance: None,
            min_gap: None,
            mode: ThresholdMode::Relative,
        }
    }
}

/// Evaluates every cell of `grid` against the label transitions of `frame`.
/// Failed cells are kept as rows with `-inf` metrics.
pub fn grid_search(frame: &TimeSeriesFrame, grid: &ParamGrid, options: &SearchOptions) -> Result<Leaderboard> {
    grid.validate()?;
    let truth = transitions_from_labels(frame.require_labels()?);
    if truth.is_empty() {
        return Err(Error::Invalid("labels contain no normal-to-anomalous transition".into()));
    }

    let mut triples: Vec<(f64, usize, usize)> = Vec::new();
    for &r in &grid.r_values {
        for &order in &grid.order_values {
            for &smooth in &grid.smooth_values {
                triples.push((r, order, smooth));
            }
        }
    }

    let rows: Vec<LeaderboardRow> = triples
        .par_iter()
        .flat_map_iter(|&(r, order, smooth)| {
            let configs: Vec<ChangeFinderConfig> = grid
                .threshold_values
                .iter()
                .map(|&t| {
                    let mut c = ChangeFinderConfig::new(r, order, smooth, t);
                    c.min_gap = options.min_gap.unwrap_or(smooth);
                    c.mode = options.mode;
                    c
                })
                .collect();
            let tolerance = options.tolerance.unwrap_or(2 * smooth);
            let scored = score_multichannel(frame, &configs[0]).and_then(|s| {
                let cs = change_score_metric(&s, &truth, tolerance)?;
                Ok((s, cs))
            });
            configs
                .into_iter()
                .map(|c| match &scored {
                    Ok((s, cs)) => {
                        let seg = c.detect(s);
                        let d = detection_f1(&seg.change_points, &truth, tolerance);
                        LeaderboardRow {
                            config: c,
                            f1: d.f1,
                            precision: d.precision,
                            recall: d.recall,
                            cs: *cs,
                            n_change_points: seg.change_points.len(),
                            error: None,
                        }
                    }
                    Err(e) => LeaderboardRow::failed(c, e),
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Leaderboard::new(options.objective, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn transitions_examples() {
        let (t, f) = (true, false);
        assert_eq!(transitions_from_labels(&[t, t, f, f, t, f]), vec![2, 5]);
        assert!(transitions_from_labels(&[t; 5]).is_empty());
        assert!(transitions_from_labels(&[f, t, t]).is_empty());
        assert!(transitions_from_labels(&[]).is_empty());
    }

    #[test]
    fn f1_examples() {
        let d = detection_f1(&[102, 250, 305], &[100, 300], 10);
        assert!((d.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(d.recall, 1.0);
        assert!((d.f1 - 0.8).abs() < 1e-12);
        assert_eq!(detection_f1(&[5, 9], &[5, 9], 0).f1, 1.0);
        assert_eq!(detection_f1(&[], &[5], 3).f1, 0.0);
        // One prediction between two truths matches only the nearer one.
        let d = detection_f1(&[14], &[10, 20], 10);
        assert_eq!(d.true_positives, 1);
    }

    fn series(cs: Vec<f64>, valid_from: usize) -> ScoreSeries {
        ScoreSeries {
            outlier_score: cs.clone(),
            smoothed_outlier: cs.clone(),
            change_score: cs,
            valid_from,
        }
    }

    #[test]
    fn cs_examples() {
        let flat = series(vec![2.0; 200], 10);
        assert_eq!(change_score_metric(&flat, &[100], 5).unwrap(), 0.0);
        let err = change_score_metric(&flat, &[], 5).unwrap_err();
        assert!(err.to_string().contains("CS undefined"));

        let mut rng = seed::rng(3);
        let mut cs: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
        cs[150] = 10.0;
        let s = series(cs, 0);
        let near = change_score_metric(&s, &[148], 5).unwrap();
        let far = change_score_metric(&s, &[300], 5).unwrap();
        assert!(near > far, "{near} vs {far}");
    }

    #[test]
    fn cs_on_step_series_is_large() {
        let mut rng = seed::rng(1);
        let xs: Vec<f64> = (0..1000)
            .map(|i| if i < 500 { 0.0 } else { 5.0 } + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let c = ChangeFinderConfig::new(0.05, 1, 5, 3.0);
        let s = crate::changefinder::changefinder_score(&xs, &c).unwrap();
        let cs = change_score_metric(&s, &[500], 10).unwrap();
        assert!(cs > 3.0, "{cs}");
    }

    fn step_frame(seed_: u64) -> TimeSeriesFrame {
        let mut rng = seed::rng(seed_);
        let n = 1200;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                (0..n)
                    .map(|i| if i < 600 { 0.0 } else { 5.0 } + rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let labels = (0..n).map(|i| i < 600).collect();
        TimeSeriesFrame::new((0..n as i64).collect(), vec!["a".into(), "b".into(), "c".into()], cols)
            .unwrap()
            .with_labels(labels)
            .unwrap()
    }

    fn small_grid() -> ParamGrid {
        ParamGrid {
            r_values: vec![0.01, 0.05, 0.1],
            order_values: vec![1],
            smooth_values: vec![5, 10],
            threshold_values: vec![3.0, 4.0],
        }
    }

    #[test]
    fn step_dataset_best_cell_hits_step_exactly() {
        let lb = grid_search(&step_frame(7), &small_grid(), &SearchOptions::default()).unwrap();
        assert_eq!(lb.rows.len(), 12);
        let best = lb.best().unwrap();
        assert_eq!(best.f1, 1.0, "{best:?}");
        for w in lb.rows.windows(2) {
            assert!(w[0].f1 >= w[1].f1);
        }
    }

    #[test]
    fn leaderboard_identical_across_thread_counts() {
        let frame = step_frame(8);
        let grid = small_grid();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| grid_search(&frame, &grid, &SearchOptions::default()).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(2));
        assert_eq!(one, run(8));
    }

    #[test]
    fn failed_cells_rank_last() {
        let frame = step_frame(9).slice(0..700);
        let grid = ParamGrid {
            r_values: vec![0.05],
            order_values: vec![1],
            smooth_values: vec![5, 400],
            threshold_values: vec![3.0],
        };
        let lb = grid_search(&frame, &grid, &SearchOptions::default()).unwrap();
        let last = lb.rows.last().unwrap();
        assert_eq!(last.config.smooth, 400);
        assert!(last.error.is_some() && last.f1 == f64::NEG_INFINITY);
    }

    #[test]
    fn tie_break_is_lexicographic() {
        let row = |r: f64, t: f64| LeaderboardRow {
            config: ChangeFinderConfig::new(r, 1, 5, t),
            f1: 0.5,
            precision: 0.5,
            recall: 0.5,
            cs: 1.0,
            n_change_points: 1,
            error: None,
        };
        let lb = Leaderboard::new(Objective::F1, vec![row(0.1, 2.0), row(0.05, 3.0), row(0.05, 2.0)]);
        let keys: Vec<(f64, f64)> = lb.rows.iter().map(|r| (r.config.r, r.config.threshold)).collect();
        assert_eq!(keys, vec![(0.05, 2.0), (0.05, 3.0), (0.1, 2.0)]);
    }

    #[test]
    fn grid_file_round_trip() {
        let g = small_grid();
        assert_eq!(ParamGrid::from_text(&g.to_document().to_text()).unwrap(), g);
        let text = "r = 0.05, 0.1\norder = 1\nsmooth = 5,10\nthreshold = 1.5, 1.8\n";
        assert_eq!(ParamGrid::from_text(text).unwrap().len(), 8);
        assert!(ParamGrid::from_text("r = 0.05\norder = 1\nsmooth = 5\n").is_err());
        assert!(ParamGrid::from_text("r = 2\norder = 1\nsmooth = 5\nthreshold = 1\n").is_err());
        assert!(ParamGrid::from_text("r = 0.1\norder = \nsmooth = 5\nthreshold = 1\n").is_err());
    }

    proptest! {
        #[test]
        fn f1_bounded(pred in prop::collection::btree_set(0usize..500, 0..20),
                      truth in prop::collection::btree_set(0usize..500, 0..20),
                      tol in 0usize..30) {
            let pred: Vec<usize> = pred.into_iter().collect();
            let truth: Vec<usize> = truth.into_iter().collect();
            let d = detection_f1(&pred, &truth, tol);
            for v in [d.precision, d.recall, d.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn adding_exact_match_never_lowers_f1(pred in prop::collection::btree_set(0usize..500, 0..20),
                                              truth in prop::collection::btree_set(0usize..500, 1..20),
                                              extra in 600usize..700, tol in 0usize..30) {
            let pred: Vec<usize> = pred.into_iter().collect();
            let truth: Vec<usize> = truth.into_iter().collect();
            let before = detection_f1(&pred, &truth, tol).f1;
            let mut p2 = pred.clone();
            p2.push(extra);
            let mut t2 = truth.clone();
            t2.push(extra);
            prop_assert!(detection_f1(&p2, &t2, tol).f1 >= before - 1e-12);
        }

        #[test]
        fn cs_affine_invariant(vals in prop::collection::vec(-10.0f64..10.0, 60..120),
                               truth in 20usize..50, a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let s = series(vals.clone(), 5);
            let t = series(vals.iter().map(|v| a * v + b).collect(), 5);
            let x = change_score_metric(&s, &[truth], 4).unwrap();
            let y = change_score_metric(&t, &[truth], 4).unwrap();
            prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{} vs {}", x, y);
        }
    }
}
