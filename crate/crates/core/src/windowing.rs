//! Sliding windows over a labeled frame, per-window features and
//! forward-horizon labels.

use std::io::Write;

use rayon::prelude::*;

use crate::changefinder::{ScoreSeries, Segmentation};
use crate::data_io::TimeSeriesFrame;
use crate::error::{Error, Result};
use crate::kvtext::Document;
use crate::stats;

/// Names of the per-channel features, in emission order.
pub const CHANNEL_FEATURES: [&str; 8] = ["mean", "std", "min", "max", "last", "slope", "mean_abs_diff", "exceed"];

/// Names of the segmentation features appended by [`augment_with_segmentation`].
pub const SEGMENT_FEATURES: [&str; 4] = ["seg_cs_mean", "seg_cs_max", "seg_since_cp", "seg_straddle"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub window_len: usize,
    pub stride: usize,
    pub horizon: usize,
}

impl WindowSpec {
    pub fn new(window_len: usize, stride: usize, horizon: usize) -> Result<Self> {
        let s = Self {
            window_len,
            stride,
            horizon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::Config(format!("window_len = {} must be >= 2", self.window_len)));
        }
        if self.stride < 1 || self.horizon < 1 {
            return Err(Error::Config("stride and horizon must be >= 1".into()));
        }
        Ok(())
    }

    /// Window spanning `minutes` at `cadence_secs` per sample, with
    /// `horizon = window_len` and a stride of a third of the window.
    pub fn from_duration(minutes: f64, cadence_secs: f64) -> Result<Self> {
        if !(cadence_secs > 0.0 && minutes > 0.0) {
            return Err(Error::Config("window duration and cadence must be positive".into()));
        }
        let len = ((minutes * 60.0) / cadence_secs).round().max(2.0) as usize;
        Self::new(len, (len / 3).max(1), len)
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::new();
        d.push("window_len", self.window_len.to_string());
        d.push("stride", self.stride.to_string());
        d.push("horizon", self.horizon.to_string());
        d
    }

    pub fn from_document(d: &Document) -> Result<Self> {
        let window_len: usize = d.require_parsed("window_len")?;
        let stride = d.parsed("stride")?.unwrap_or((window_len / 3).max(1));
        let horizon = d.parsed("horizon")?.unwrap_or(window_len);
        Self::new(window_len, stride, horizon)
    }
}

/// Per-channel exceedance thresholds (training quantile).
#[derive(Debug, Clone, PartialEq)]
pub struct ExceedanceThresholds {
    pub channels: Vec<String>,
    pub values: Vec<f64>,
}

impl ExceedanceThresholds {
    /// Quantile `q` of every channel over `rows` (defaults to all samples).
    pub fn fit(frame: &TimeSeriesFrame, rows: Option<std::ops::Range<usize>>, q: f64) -> Result<Self> {
        let rows = rows.unwrap_or(0..frame.n_samples());
        if rows.is_empty() {
            return Err(Error::Empty("no training samples to fit exceedance thresholds"));
        }
        let values = frame
            .columns()
            .iter()
            .map(|c| {
                let finite: Vec<f64> = c[rows.clone()].iter().copied().filter(|v| v.is_finite()).collect();
                if finite.is_empty() {
                    f64::INFINITY
                } else {
                    stats::quantile_sorted(&stats::sorted_copy(&finite), q)
                }
            })
            .collect();
        Ok(Self {
            channels: frame.channels().to_vec(),
            values,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowMeta {
    pub start: usize,
    pub end: usize,
    pub horizon_end: usize,
}

/// Supervised window dataset. Labels are `true` for anomalous horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub feature_names: Vec<String>,
    pub meta: Vec<WindowMeta>,
    pub n_samples: usize,
}

impl WindowDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn select(&self, keep: impl Fn(usize, &WindowMeta) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i, &self.meta[i])).collect();
        Self {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            meta: idx.iter().map(|&i| self.meta[i]).collect(),
            n_samples: self.n_samples,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> std::io::Result<()> {
        for line in comments.iter().flat_map(|c| c.lines()) {
            writeln!(out, "# {line}")?;
        }
        write!(out, "start,end,horizon_end")?;
        for name in &self.feature_names {
            write!(out, ",{name}")?;
        }
        writeln!(out, ",label")?;
        for ((row, m), &l) in self.features.iter().zip(&self.meta).zip(&self.labels) {
            write!(out, "{},{},{}", m.start, m.end, m.horizon_end)?;
            for v in row {
                write!(out, ",{v:?}")?;
            }
            writeln!(out, ",{}", u8::from(l))?;
        }
        Ok(())
    }
}

impl WindowDataset {
    /// Reads the CSV written by [`WindowDataset::write_csv`]. `n_samples`
    /// becomes the largest `horizon_end`.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let k = header.len();
        if k < 5 || header[..3] != ["start", "end", "horizon_end"] || header[k - 1] != "label" {
            return Err(Error::Schema {
                expected: "start,end,horizon_end,<features>,label".into(),
                found: header.join(","),
            });
        }
        let feature_names = header[3..k - 1].to_vec();
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = feature_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Invalid(format!("duplicate feature column `{dup}`")));
        }
        let mut ds = WindowDataset {
            features: Vec::new(),
            labels: Vec::new(),
            feature_names,
            meta: Vec::new(),
            n_samples: 0,
        };
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let index = |j: usize| -> Result<usize> {
                rec[j].parse().map_err(|_| Error::parse(line, format!("bad index `{}`", &rec[j])))
            };
            let meta = WindowMeta {
                start: index(0)?,
                end: index(1)?,
                horizon_end: index(2)?,
            };
            if !(meta.start < meta.end && meta.end < meta.horizon_end) {
                return Err(Error::parse(line, "need start < end < horizon_end"));
            }
            let row = (3..k - 1)
                .map(|j| rec[j].parse::<f64>().map_err(|_| Error::parse(line, format!("bad value `{}`", &rec[j]))))
                .collect::<Result<Vec<_>>>()?;
            let label = match &rec[k - 1] {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(line, format!("label must be 0 or 1, got `{other}`"))),
            };
            ds.n_samples = ds.n_samples.max(meta.horizon_end);
            ds.features.push(row);
            ds.labels.push(label);
            ds.meta.push(meta);
        }
        Ok(ds)
    }

    /// Windows whose horizon ends by `split_index` (the training side of
    /// [`temporal_split`]).
    pub fn train_side(&self, split_index: usize) -> Self {
        self.select(|_, m| m.horizon_end <= split_index)
    }

    /// Windows starting at or after `split_index`.
    pub fn test_side(&self, split_index: usize) -> Self {
        self.select(|_, m| m.start >= split_index)
    }
}

/// Features of one channel's window: mean, population std, min, max, last,
/// least-squares slope over the sample index, mean |first difference| and
/// the number of samples strictly above `threshold`.
pub fn extract_features(xs: &[f64], threshold: f64) -> [f64; 8] {
    let n = xs.len();
    let mean = stats::mean(xs);
    let std = stats::std_dev(xs);
    let (min, max) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let last = xs.last().copied().unwrap_or(f64::NAN);
    let tbar = (n as f64 - 1.0) / 2.0;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &x) in xs.iter().enumerate() {
        let dt = i as f64 - tbar;
        sxy += dt * (x - mean);
        sxx += dt * dt;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mad = if n > 1 {
        xs.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let exceed = xs.iter().filter(|&&x| x > threshold).count() as f64;
    [mean, std, min, max, last, slope, mad, exceed]
}

/// Cuts `frame` into windows starting at `0, stride, 2·stride, …` with the
/// full horizon inside the series. A window is labeled anomalous iff any
/// horizon sample is anomalous.
pub fn make_windows(frame: &TimeSeriesFrame, spec: &WindowSpec, thresholds: &ExceedanceThresholds) -> Result<WindowDataset> {
    spec.validate()?;
    let normal = frame.require_labels()?;
    if thresholds.channels.as_slice() != frame.channels() {
        return Err(Error::Invalid("exceedance thresholds were fitted on different channels".into()));
    }
    let n = frame.n_samples();
    let span = spec.window_len + spec.horizon;
    if n < span {
        return Err(Error::TooShort { needed: span - 1, got: n });
    }
    let starts: Vec<usize> = (0..=n - span).step_by(spec.stride).collect();
    // Prefix count of anomalous samples for O(1) horizon labels.
    let mut bad = vec![0usize; n + 1];
    for (i, &ok) in normal.iter().enumerate() {
        bad[i + 1] = bad[i] + usize::from(!ok);
    }
    let rows: Vec<(Vec<f64>, bool, WindowMeta)> = starts
        .par_iter()
        .map(|&s| {
            let end = s + spec.window_len;
            let hend = end + spec.horizon;
            let mut row = Vec::with_capacity(frame.n_channels() * CHANNEL_FEATURES.len());
            for (col, &thr) in frame.columns().iter().zip(&thresholds.values) {
                row.extend_from_slice(&extract_features(&col[s..end], thr));
            }
            let meta = WindowMeta {
                start: s,
                end,
                horizon_end: hend,
            };
            (row, bad[hend] > bad[end], meta)
        })
        .collect();
    let feature_names = frame
        .channels()
        .iter()
        .flat_map(|c| CHANNEL_FEATURES.iter().map(move |f| format!("{c}__{f}")))
        .collect();
    let mut ds = WindowDataset {
        features: Vec::with_capacity(rows.len()),
        labels: Vec::with_capacity(rows.len()),
        feature_names,
        meta: Vec::with_capacity(rows.len()),
        n_samples: n,
    };
    for (row, label, meta) in rows {
        ds.features.push(row);
        ds.labels.push(label);
        ds.meta.push(meta);
    }
    Ok(ds)
}

/// Appends the segmentation features to every window: mean and max change
/// score inside the window, samples since the last change point known at
/// the window end (the series length if none), and a flag for a change
/// point strictly inside the window. Only change points confirmed before
/// the window end are used. With `drop_straddling`, flagged windows are
/// removed instead.
pub fn augment_with_segmentation(
    dataset: &WindowDataset,
    scores: &ScoreSeries,
    seg: &Segmentation,
    drop_straddling: bool,
) -> Result<WindowDataset> {
    let n = dataset.n_samples;
    if scores.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: scores.len(),
        });
    }
    if seg.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: seg.len(),
        });
    }
    let known: Vec<(usize, usize)> = seg
        .change_points
        .iter()
        .copied()
        .zip(seg.confirmed_at.iter().copied())
        .collect();
    let mut out = dataset.clone();
    out.feature_names.extend(SEGMENT_FEATURES.iter().map(|s| s.to_string()));
    let mut keep = vec![true; dataset.len()];
    for (i, m) in dataset.meta.iter().enumerate() {
        let cs = &scores.change_score[m.start..m.end];
        let cs_mean = stats::mean(cs);
        let cs_max = cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let visible = known.iter().filter(|&&(_, c)| c < m.end).map(|&(p, _)| p);
        let last = visible.clone().max();
        let since = last.map_or(n as f64, |p| (m.end - p) as f64);
        let straddle = visible.clone().any(|p| p > m.start && p < m.end);
        out.features[i].extend_from_slice(&[cs_mean, cs_max, since, f64::from(u8::from(straddle))]);
        keep[i] = !(drop_straddling && straddle);
    }
    if drop_straddling {
        out = out.select(|i, _| keep[i]);
    }
    Ok(out)
}

/// Splits by time: windows whose horizon ends by `split_index` train,
/// windows starting at or after it test, the rest are discarded.
pub fn temporal_split(dataset: &WindowDataset, split_index: usize) -> Result<(WindowDataset, WindowDataset)> {
    if split_index > dataset.n_samples {
        return Err(Error::Invalid(format!(
            "split index {split_index} beyond series length {}",
            dataset.n_samples
        )));
    }
    let train = dataset.train_side(split_index);
    let test = dataset.test_side(split_index);
    if train.is_empty() {
        return Err(Error::Empty("empty train partition"));
    }
    if test.is_empty() {
        return Err(Error::Empty("empty test partition"));
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(cols: Vec<Vec<f64>>, normal: Vec<bool>) -> TimeSeriesFrame {
        let n = cols[0].len();
        let names = (0..cols.len()).map(|i| format!("c{i}")).collect();
        TimeSeriesFrame::new((0..n as i64).collect(), names, cols)
            .unwrap()
            .with_labels(normal)
            .unwrap()
    }

    fn ramp_frame(n: usize) -> TimeSeriesFrame {
        frame(vec![(0..n).map(|i| i as f64).collect()], vec![true; n])
    }

    #[test]
    fn window_count_example() {
        let f = ramp_frame(100);
        let th = ExceedanceThresholds::fit(&f, None, 0.95).unwrap();
        let ds = make_windows(&f, &WindowSpec::new(30, 10, 10).unwrap(), &th).unwrap();
        assert_eq!(ds.len(), 7);
        let starts: Vec<usize> = ds.meta.iter().map(|m| m.start).collect();
        assert_eq!(starts, vec![0, 10, 20, 30, 40, 50, 60]);
        assert!(ds.labels.iter().all(|&l| !l));
        assert_eq!(ds.n_features(), 8);
        assert_eq!(ds.feature_names[0], "c0__mean");
        assert!(make_windows(&ramp_frame(39), &WindowSpec::new(30, 10, 10).unwrap(), &th).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut normal = vec![true; 100];
        normal[45] = false;
        let f = frame(vec![(0..100).map(|i| (i as f64).sin()).collect()], normal);
        let th = ExceedanceThresholds::fit(&f, None, 0.9).unwrap();
        let ds = make_windows(&f, &WindowSpec::new(30, 10, 10).unwrap(), &th).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, &["made\nby test".into()]).unwrap();
        assert_eq!(WindowDataset::read_csv(buf.as_slice()).unwrap(), ds);
        for bad in [
            "start,end,label\n",
            "start,end,horizon_end,a,label\n5,3,9,1.0,0\n",
            "start,end,horizon_end,a,label\n0,3,9,x,0\n",
            "start,end,horizon_end,a,label\n0,3,9,1.0,2\n",
            "start,end,horizon_end,a,a,label\n",
        ] {
            assert!(WindowDataset::read_csv(bad.as_bytes()).is_err(), "{bad}");
        }
    }

    #[test]
    fn single_anomaly_labels_covering_horizons() {
        let mut normal = vec![true; 100];
        normal[45] = false;
        let f = frame(vec![vec![1.0; 100]], normal);
        let th = ExceedanceThresholds::fit(&f, None, 0.95).unwrap();
        let ds = make_windows(&f, &WindowSpec::new(30, 10, 10).unwrap(), &th).unwrap();
        let flagged: Vec<usize> = ds.meta.iter().zip(&ds.labels).filter(|(_, &l)| l).map(|(m, _)| m.start).collect();
        // Horizon [s+30, s+40) covers 45 for s in {10}.
        assert_eq!(flagged, vec![10]);
    }

    #[test]
    fn feature_examples() {
        let f = extract_features(&[1.0, 2.0, 3.0], 10.0);
        assert_eq!(f[0], 2.0);
        assert!((f[5] - 1.0).abs() < 1e-12);
        assert_eq!(f[6], 1.0);
        assert_eq!((f[2], f[3], f[4]), (1.0, 3.0, 3.0));
        let c = extract_features(&[4.0; 6], 10.0);
        assert_eq!((c[1], c[5], c[6]), (0.0, 0.0, 0.0));
        assert_eq!(extract_features(&[0.0, 0.0, 10.0], 5.0)[7], 1.0);
    }

    fn scores(cs: Vec<f64>) -> ScoreSeries {
        ScoreSeries {
            outlier_score: cs.clone(),
            smoothed_outlier: cs.clone(),
            change_score: cs,
            valid_from: 0,
        }
    }

    #[test]
    fn augmentation_examples() {
        let f = ramp_frame(100);
        let th = ExceedanceThresholds::fit(&f, None, 0.95).unwrap();
        let ds = make_windows(&f, &WindowSpec::new(30, 10, 10).unwrap(), &th).unwrap();
        let s = scores(vec![0.5; 100]);

        let none = Segmentation::from_change_points(vec![], 100);
        let a = augment_with_segmentation(&ds, &s, &none, false).unwrap();
        assert_eq!(a.n_features(), ds.n_features() + 4);
        for row in &a.features {
            assert_eq!(&row[8..], &[0.5, 0.5, 100.0, 0.0]);
        }

        let one = Segmentation::from_change_points(vec![50], 100);
        let a = augment_with_segmentation(&ds, &s, &one, false).unwrap();
        let w = ds.meta.iter().position(|m| m.start == 40).unwrap();
        assert_eq!(a.features[w][11], 1.0);
        assert_eq!(a.features[w][10], 20.0);
        let aligned = augment_with_segmentation(&ds, &s, &one, true).unwrap();
        assert!(aligned.features.iter().all(|r| r[11] == 0.0));
        assert_eq!(aligned.len(), ds.len() - 2);

        // A change point confirmed only after the window end is invisible.
        let late = Segmentation::with_confirmation(vec![50], vec![75], 100);
        let a = augment_with_segmentation(&ds, &s, &late, false).unwrap();
        assert_eq!(a.features[w][11], 0.0);
        assert_eq!(a.features[w][10], 100.0);

        assert!(augment_with_segmentation(&ds, &scores(vec![0.0; 99]), &none, false).is_err());
    }

    #[test]
    fn split_examples() {
        let f = ramp_frame(100);
        let th = ExceedanceThresholds::fit(&f, None, 0.95).unwrap();
        let ds = make_windows(&f, &WindowSpec::new(30, 10, 10).unwrap(), &th).unwrap();
        let (train, test) = temporal_split(&ds, 50).unwrap();
        // horizon_end = s + 40 <= 50 -> s in {0, 10}; start >= 50 -> {50, 60}.
        assert_eq!(train.meta.iter().map(|m| m.start).collect::<Vec<_>>(), vec![0, 10]);
        assert_eq!(test.meta.iter().map(|m| m.start).collect::<Vec<_>>(), vec![50, 60]);
        let err = temporal_split(&ds, 100).unwrap_err();
        assert!(err.to_string().contains("empty test"));
        assert!(temporal_split(&ds, 0).unwrap_err().to_string().contains("empty train"));

        let ds2 = make_windows(&f, &WindowSpec::new(30, 40, 10).unwrap(), &th).unwrap();
        let (a, b) = temporal_split(&ds2, 40).unwrap();
        assert_eq!(a.len() + b.len(), ds2.len());
    }

    #[test]
    fn csv_output_shape() {
        let f = ramp_frame(50);
        let th = ExceedanceThresholds::fit(&f, None, 0.95).unwrap();
        let ds = make_windows(&f, &WindowSpec::new(10, 10, 5).unwrap(), &th).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, &["x".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# x");
        assert!(lines[1].starts_with("start,end,horizon_end,c0__mean"));
        assert_eq!(lines.len(), 2 + ds.len());
        assert!(lines[2].ends_with(",0"));
    }

    #[test]
    fn spec_from_duration() {
        let s = WindowSpec::from_duration(30.0, 60.0).unwrap();
        assert_eq!((s.window_len, s.stride, s.horizon), (30, 10, 30));
        assert!(WindowSpec::new(1, 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn translation_covariance(xs in prop::collection::vec(-100.0f64..100.0, 2..40), c in -50.0f64..50.0) {
            let a = extract_features(&xs, 0.0);
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let b = extract_features(&shifted, 0.0);
            for k in [0usize, 2, 3, 4] {
                prop_assert!((b[k] - a[k] - c).abs() < 1e-9);
            }
            for k in [1usize, 5, 6] {
                prop_assert!((b[k] - a[k]).abs() < 1e-7);
            }
        }

        #[test]
        fn labels_match_brute_force_and_no_leak(
            normal in prop::collection::vec(prop::bool::weighted(0.9), 20..80),
            len in 2usize..8, stride in 1usize..5, horizon in 1usize..6, split in 0usize..80,
        ) {
            let n = normal.len();
            prop_assume!(n >= len + horizon);
            let f = frame(vec![(0..n).map(|i| (i % 7) as f64).collect()], normal.clone());
            let th = ExceedanceThresholds::fit(&f, None, 0.95).unwrap();
            let ds = make_windows(&f, &WindowSpec::new(len, stride, horizon).unwrap(), &th).unwrap();
            for (m, &l) in ds.meta.iter().zip(&ds.labels) {
                prop_assert_eq!(l, (m.end..m.horizon_end).any(|i| !normal[i]));
            }
            if let Ok((train, test)) = temporal_split(&ds, split.min(n)) {
                let used: std::collections::HashSet<usize> =
                    train.meta.iter().flat_map(|m| m.start..m.horizon_end).collect();
                for m in &test.meta {
                    prop_assert!((m.start..m.horizon_end).all(|i| !used.contains(&i)));
                }
            }
        }
    }
}
