//! Soft-voting ensembles and evaluation reports.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::detectors::DetectorModel;
use crate::error::{Error, Result};
use crate::kvtext::fmt_f64;

pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;

/// Unweighted mean of member probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<DetectorModel>,
}

impl EnsembleModel {
    pub fn new(members: Vec<DetectorModel>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Config(format!("an ensemble needs at least 2 members, got {}", members.len())));
        }
        let names = &members[0].feature_names;
        if let Some(m) = members.iter().find(|m| &m.feature_names != names) {
            return Err(Error::Invalid(format!(
                "member `{}` uses a different feature space",
                m.kind().as_str()
            )));
        }
        Ok(Self { members })
    }

    pub fn n_features(&self) -> usize {
        self.members[0].n_features()
    }

    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let per_member = self
            .members
            .iter()
            .map(|m| m.predict_proba_batch(rows))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..rows.len())
            .into_par_iter()
            .map(|i| mean_of(per_member.iter().map(|p| p[i])))
            .collect())
    }
}

/// Mean computed over the values in ascending order so that the result
/// does not depend on member order.
fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Soft vote over precomputed member probability vectors.
pub fn ensemble_predict(member_probs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = member_probs.first().map_or(0, Vec::len);
    if let Some(p) = member_probs.iter().find(|p| p.len() != n) {
        return Err(Error::Dimension { expected: n, got: p.len() });
    }
    if member_probs.is_empty() {
        return Err(Error::Empty("no ensemble members"));
    }
    Ok((0..n).map(|i| mean_of(member_probs.iter().map(|p| p[i]))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn class_metrics(tp: usize, fp: usize, fn_: usize) -> ClassMetrics {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassMetrics {
        precision,
        recall,
        f1,
        support: tp + fn_,
    }
}

/// Confusion counts with class 1 = fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tp: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub normal: ClassMetrics,
    pub fault: ClassMetrics,
    pub confusion: Confusion,
    /// `None` when the labels hold a single class.
    pub auc_roc: Option<f64>,
    pub decision_threshold: f64,
}

/// Predictions are `prob >= threshold`; zero denominators give 0.
pub fn classification_report(probs: &[f64], labels: &[bool], threshold: f64) -> Result<EvalReport> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: probs.len(),
        });
    }
    let mut c = Confusion::default();
    for (&p, &l) in probs.iter().zip(labels) {
        match (p >= threshold, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(EvalReport {
        normal: class_metrics(c.tn, c.fn_, c.fp),
        fault: class_metrics(c.tp, c.fp, c.fn_),
        confusion: c,
        auc_roc: auc_roc(probs, labels).ok(),
        decision_threshold: threshold,
    })
}

/// Mann-Whitney AUC with midranks for ties.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate("AUC-ROC needs both classes".into()));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite { index: i, value: scores[i] });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Ranks are doubled so that midranks stay integral.
    let mut pos_rank2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u64;
        pos_rank2 += mid2 * order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        i = j + 1;
    }
    let (p, q) = (n_pos as u64, n_neg as u64);
    let u2 = pos_rank2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * q) as f64)
}

pub const METRIC_NAMES: [&str; 7] = [
    "precision_0",
    "recall_0",
    "f1_0",
    "precision_1",
    "recall_1",
    "f1_1",
    "auc_roc",
];

impl EvalReport {
    /// Values in [`METRIC_NAMES`] order; a missing AUC is NaN.
    pub fn metrics(&self) -> [f64; 7] {
        [
            self.normal.precision,
            self.normal.recall,
            self.normal.f1,
            self.fault.precision,
            self.fault.recall,
            self.fault.f1,
            self.auc_roc.unwrap_or(f64::NAN),
        ]
    }

    pub fn to_text(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{title}");
        let _ = writeln!(s, "{:<10}{:>11}{:>9}{:>10}{:>9}", "case", "precision", "recall", "f1-score", "support");
        for (name, m) in [("0", &self.normal), ("1", &self.fault)] {
            let _ = writeln!(
                s,
                "{:<10}{:>11.4}{:>9.4}{:>10.4}{:>9}",
                name, m.precision, m.recall, m.f1, m.support
            );
        }
        let auc = self.auc_roc.map_or("undefined".into(), |a| format!("{a:.4}"));
        let _ = writeln!(s, "AUC-ROC: {auc}");
        let c = &self.confusion;
        let _ = writeln!(s, "confusion (rows = true 0/1, cols = predicted 0/1):");
        let _ = writeln!(s, "  {:>8} {:>8}", c.tn, c.fp);
        let _ = writeln!(s, "  {:>8} {:>8}", c.fn_, c.tp);
        let _ = writeln!(s, "decision threshold: {}", self.decision_threshold);
        s
    }

    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut s = comment_lines(comments);
        s.push_str("metric,value\n");
        for (name, v) in METRIC_NAMES.iter().zip(self.metrics()) {
            let _ = writeln!(s, "{name},{}", fmt_f64(v));
        }
        let c = &self.confusion;
        for (name, v) in [("tn", c.tn), ("fp", c.fp), ("fn", c.fn_), ("tp", c.tp)] {
            let _ = writeln!(s, "{name},{v}");
        }
        let _ = writeln!(s, "decision_threshold,{}", fmt_f64(self.decision_threshold));
        s
    }

    /// Reads back the CSV written by [`EvalReport::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["metric", "value"] {
            return Err(Error::Schema {
                expected: "metric,value".into(),
                found: header.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut values = std::collections::BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::parse(i + 2, "expected 2 fields"));
            }
            let v = crate::kvtext::parse_f64(&rec[1]).ok_or_else(|| Error::parse(i + 2, format!("bad number `{}`", &rec[1])))?;
            if values.insert(rec[0].to_string(), v).is_some() {
                return Err(Error::parse(i + 2, format!("duplicate metric `{}`", &rec[0])));
            }
        }
        let get = |k: &str| values.get(k).copied().ok_or_else(|| Error::Invalid(format!("missing metric `{k}`")));
        let count = |k: &str| -> Result<usize> {
            let v = get(k)?;
            if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
                Ok(v as usize)
            } else {
                Err(Error::Invalid(format!("`{k}` is not a count")))
            }
        };
        let confusion = Confusion {
            tn: count("tn")?,
            fp: count("fp")?,
            fn_: count("fn")?,
            tp: count("tp")?,
        };
        let class = |p: &str, r: &str, f: &str, support| -> Result<ClassMetrics> {
            Ok(ClassMetrics {
                precision: get(p)?,
                recall: get(r)?,
                f1: get(f)?,
                support,
            })
        };
        let auc = get("auc_roc")?;
        Ok(Self {
            normal: class("precision_0", "recall_0", "f1_0", confusion.tn + confusion.fp)?,
            fault: class("precision_1", "recall_1", "f1_1", confusion.tp + confusion.fn_)?,
            confusion,
            auc_roc: (!auc.is_nan()).then_some(auc),
            decision_threshold: get("decision_threshold")?,
        })
    }

    /// Writes `{stem}.txt` and `{stem}.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str, title: &str, comments: &[String]) -> Result<()> {
        let txt = dir.join(format!("{stem}.txt"));
        let body = comment_lines(comments) + &self.to_text(title);
        std::fs::write(&txt, body).map_err(|e| Error::io(&txt, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv(comments)).map_err(|e| Error::io(&csv, e))
    }
}

fn comment_lines(comments: &[String]) -> String {
    comments.iter().flat_map(|c| c.lines()).map(|l| format!("# {l}\n")).collect()
}

/// Per-metric deltas `a − b` in [`METRIC_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: [f64; 7],
    pub b: [f64; 7],
    pub delta: [f64; 7],
}

pub fn compare_runs(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    if a.confusion.total() != b.confusion.total()
        || a.normal.support != b.normal.support
        || a.fault.support != b.fault.support
    {
        return Err(Error::Invalid(format!(
            "reports cover different test sets ({} vs {} rows, {} vs {} faults)",
            a.confusion.total(),
            b.confusion.total(),
            a.fault.support,
            b.fault.support
        )));
    }
    let (ma, mb) = (a.metrics(), b.metrics());
    let mut delta = [0.0; 7];
    for k in 0..7 {
        delta[k] = ma[k] - mb[k];
    }
    Ok(Comparison { a: ma, b: mb, delta })
}

impl Comparison {
    pub fn to_csv(&self, label_a: &str, label_b: &str, comments: &[String]) -> String {
        let mut s = comment_lines(comments);
        let _ = writeln!(s, "metric,{label_a},{label_b},delta");
        for (k, name) in METRIC_NAMES.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                name,
                fmt_f64(self.a[k]),
                fmt_f64(self.b[k]),
                fmt_f64(self.delta[k])
            );
        }
        s
    }

    pub fn to_text(&self, label_a: &str, label_b: &str) -> String {
        let mut s = format!("{:<13}{:>12}{:>12}{:>10}\n", "metric", label_a, label_b, "delta");
        for (k, name) in METRIC_NAMES.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<13}{:>12.4}{:>12.4}{:>+10.4}",
                name, self.a[k], self.b[k], self.delta[k]
            );
        }
        s
    }
}

/// One scored test window.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub window_index: usize,
    pub start: usize,
    pub end: usize,
    pub timestamp: i64,
    pub probability: f64,
    pub label: bool,
}

pub const PREDICTIONS_HEADER: &str = "window_index,start,end,timestamp,probability,label";

pub fn write_predictions(rows: &[Prediction], comments: &[String]) -> String {
    let mut s = comment_lines(comments);
    s.push_str(PREDICTIONS_HEADER);
    s.push('\n');
    for p in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            p.window_index,
            p.start,
            p.end,
            p.timestamp,
            fmt_f64(p.probability),
            u8::from(p.label)
        );
    }
    s
}

pub fn read_predictions(text: &str) -> Result<Vec<Prediction>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != PREDICTIONS_HEADER {
        return Err(Error::Schema {
            expected: PREDICTIONS_HEADER.into(),
            found: header,
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |what: &str, v: &str| Error::parse(line, format!("bad {what} `{v}`"));
        let idx = |j: usize| rec[j].parse::<usize>().map_err(|_| bad("index", &rec[j]));
        let probability: f64 = rec[4].parse().map_err(|_| bad("probability", &rec[4]))?;
        if !(0.0..=1.0).contains(&probability) {
            return Err(bad("probability", &rec[4]));
        }
        out.push(Prediction {
            window_index: idx(0)?,
            start: idx(1)?,
            end: idx(2)?,
            timestamp: rec[3].parse().map_err(|_| bad("timestamp", &rec[3]))?,
            probability,
            label: match &rec[5] {
                "0" => false,
                "1" => true,
                v => return Err(bad("label", v)),
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(s: &[f64], l: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] && !l[j] {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn soft_vote_examples() {
        assert_eq!(ensemble_predict(&[vec![0.2], vec![0.4]]).unwrap(), vec![(0.2 + 0.4) / 2.0]);
        assert_eq!(ensemble_predict(&[vec![0.0], vec![1.0]]).unwrap(), vec![0.5]);
        assert_eq!(ensemble_predict(&[vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap(), vec![0.3, 0.7]);
        assert!(ensemble_predict(&[vec![0.3], vec![0.3, 0.7]]).is_err());
    }

    #[test]
    fn report_examples() {
        let r = classification_report(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false], 0.5).unwrap();
        for m in [r.normal, r.fault] {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
        let r = classification_report(&[0.1, 0.2, 0.3], &[true, false, true], 0.5).unwrap();
        assert_eq!((r.fault.precision, r.fault.recall, r.fault.f1), (0.0, 0.0, 0.0));
        let r = classification_report(&[0.6, 0.6, 0.4, 0.6], &[true, false, false, true], 0.5).unwrap();
        assert!((r.fault.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.fault.recall, 1.0);
        assert!((r.fault.f1 - 0.8).abs() < 1e-15);
        assert_eq!(r.confusion, Confusion { tn: 1, fp: 1, fn_: 0, tp: 2 });
        // Exactly at the threshold counts as positive.
        let r = classification_report(&[0.5], &[true], 0.5).unwrap();
        assert_eq!(r.confusion.tp, 1);
        assert_eq!(r.auc_roc, None);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.8, 0.6, 0.4, 0.2], &[true, false, true, false]).unwrap(), 0.75);
        assert_eq!(auc_roc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(auc_roc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn compare_examples() {
        let mk = |probs: &[f64]| classification_report(probs, &[true, false, true, false], 0.5).unwrap();
        let a = mk(&[0.9, 0.1, 0.8, 0.2]);
        let b = mk(&[0.6, 0.7, 0.4, 0.2]);
        let same = compare_runs(&a, &a).unwrap();
        assert!(same.delta.iter().all(|d| *d == 0.0));
        let ab = compare_runs(&a, &b).unwrap();
        let ba = compare_runs(&b, &a).unwrap();
        for k in 0..7 {
            assert_eq!(ab.delta[k], -ba.delta[k]);
        }
        let mut hi = a.clone();
        hi.auc_roc = Some(0.976);
        let mut lo = a.clone();
        lo.auc_roc = Some(0.8599);
        let d = compare_runs(&hi, &lo).unwrap().delta[6];
        assert!((d - 0.1161).abs() < 1e-12);
        let other = classification_report(&[0.1, 0.2], &[true, false], 0.5).unwrap();
        assert!(compare_runs(&a, &other).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let r = classification_report(&[0.6, 0.6, 0.4, 0.6, 0.1], &[true, false, false, true, false], 0.5).unwrap();
        assert_eq!(EvalReport::from_csv(&r.to_csv(&["x".into()])).unwrap(), r);
        let single = classification_report(&[0.6], &[true], 0.5).unwrap();
        assert_eq!(EvalReport::from_csv(&single.to_csv(&[])).unwrap(), single);
        assert!(EvalReport::from_csv("metric,value\nauc_roc,0.5\n").is_err());
        assert!(r.to_text("demo").contains("AUC-ROC: 0.8333"));
    }

    #[test]
    fn predictions_round_trip() {
        let rows = vec![
            Prediction { window_index: 0, start: 0, end: 30, timestamp: 1_700_000_000, probability: 0.1, label: false },
            Prediction { window_index: 1, start: 10, end: 40, timestamp: -5, probability: 1.0, label: true },
        ];
        let text = write_predictions(&rows, &["x = 1".into()]);
        assert_eq!(read_predictions(&text).unwrap(), rows);
        assert!(read_predictions("window_index,start\n").is_err());
        let bad = format!("{PREDICTIONS_HEADER}\n0,0,1,0,1.5,0\n");
        assert!(read_predictions(&bad).is_err());
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..=50).prop_flat_map(|n| {
            (
                prop::collection::vec((0u8..8).prop_map(|v| f64::from(v) / 4.0), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_matches_brute_force((s, l) in instance()) {
            prop_assume!(l.iter().any(|&v| v) && l.iter().any(|&v| !v));
            prop_assert!((auc_roc(&s, &l).unwrap() - brute_auc(&s, &l)).abs() <= 1e-12);
        }

        #[test]
        fn auc_rank_invariant((s, l) in instance()) {
            prop_assume!(l.iter().any(|&v| v) && l.iter().any(|&v| !v));
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(auc_roc(&s, &l).unwrap(), auc_roc(&t, &l).unwrap());
        }

        #[test]
        fn auc_negation_complements(mut s in prop::collection::vec(-1e3f64..1e3, 2..40), seed_ in any::<u64>()) {
            s.sort_by(f64::total_cmp);
            s.dedup();
            let l: Vec<bool> = (0..s.len()).map(|i| (seed_ >> (i % 64)) & 1 == 1).collect();
            prop_assume!(l.iter().any(|&v| v) && l.iter().any(|&v| !v));
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            prop_assert!((auc_roc(&s, &l).unwrap() + auc_roc(&neg, &l).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn report_counts_and_recall_independence((s, l) in instance(), flip in any::<u64>()) {
            let r = classification_report(&s, &l, 0.5).unwrap();
            prop_assert_eq!(r.confusion.total(), s.len());
            for m in [r.normal, r.fault] {
                for v in [m.precision, m.recall, m.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            // Changing predictions on normal rows leaves fault recall alone.
            let t: Vec<f64> = s.iter().zip(&l).enumerate()
                .map(|(i, (&p, &lab))| if !lab && (flip >> (i % 64)) & 1 == 1 { 1.0 - p } else { p })
                .collect();
            prop_assert_eq!(classification_report(&t, &l, 0.5).unwrap().fault.recall, r.fault.recall);
        }

        #[test]
        fn soft_vote_permutation_invariant(m in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 5), 2..6)) {
            let mut rev = m.clone();
            rev.reverse();
            let a = ensemble_predict(&m).unwrap();
            let b = ensemble_predict(&rev).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
