//! Health Index, moving-average smoothing and alarm extraction.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kvtext::fmt_f64;

pub const WARNING_THRESHOLD: f64 = 0.5;
pub const ALERT_THRESHOLD: f64 = 0.25;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HealthConfig {
    pub window: usize,
    pub warning_threshold: f64,
    pub alert_threshold: f64,
}

impl Default for HealthConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_SMOOTHING_WINDOW,
            warning_threshold: WARNING_THRESHOLD,
            alert_threshold: ALERT_THRESHOLD,
        }
    }
}

/// `hi_i = 1 − p_i`.
pub fn health_index(probs: &[f64]) -> Result<Vec<f64>> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if (0.0..=1.0).contains(&p) {
                Ok(1.0 - p)
            } else {
                Err(Error::Invalid(format!("probability {p} at index {i} is outside [0, 1]")))
            }
        })
        .collect()
}

/// Trailing moving average; the first `window − 1` entries average the
/// available prefix. Each mean is summed afresh and clamped to the window's
/// range, which keeps the map monotone and constant series unchanged.
pub fn smooth_hi(hi: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..hi.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w = &hi[lo..=i];
            let (min, max) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            (w.iter().sum::<f64>() / w.len() as f64).clamp(min, max)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlarmKind {
    Warning,
    Alert,
}

impl AlarmKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlarmKind::Warning => "warning",
            AlarmKind::Alert => "alert",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alarm {
    pub kind: AlarmKind,
    pub window_index: usize,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HealthSeries {
    pub timestamps: Vec<i64>,
    pub hi: Vec<f64>,
    pub hi_smoothed: Vec<f64>,
    pub warnings: Vec<usize>,
    pub alerts: Vec<usize>,
    pub config: HealthConfig,
}

impl HealthSeries {
    /// `timestamps` holds one timestamp per window (typically its end).
    pub fn compute(probs: &[f64], timestamps: &[i64], config: HealthConfig) -> Result<Self> {
        if probs.len() != timestamps.len() {
            return Err(Error::Dimension {
                expected: probs.len(),
                got: timestamps.len(),
            });
        }
        let hi = health_index(probs)?;
        let hi_smoothed = smooth_hi(&hi, config.window);
        let warnings = (0..hi.len())
            .filter(|&i| hi_smoothed[i] < config.warning_threshold)
            .collect();
        let alerts = (0..hi.len()).filter(|&i| hi[i] < config.alert_threshold).collect();
        Ok(Self {
            timestamps: timestamps.to_vec(),
            hi,
            hi_smoothed,
            warnings,
            alerts,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.hi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hi.is_empty()
    }

    /// Warnings and alerts in window order, warnings first at equal index.
    pub fn extract_alarms(&self) -> Vec<Alarm> {
        let mut out: Vec<Alarm> = self
            .warnings
            .iter()
            .map(|&i| (AlarmKind::Warning, i))
            .chain(self.alerts.iter().map(|&i| (AlarmKind::Alert, i)))
            .map(|(kind, i)| Alarm {
                kind,
                window_index: i,
                timestamp: self.timestamps[i],
            })
            .collect();
        out.sort_by_key(|a| (a.window_index, a.kind == AlarmKind::Alert));
        out
    }

    /// Plot-ready CSV; thresholds and the smoothing window go into the
    /// leading comment block.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut s = String::new();
        for line in comments.iter().flat_map(|c| c.lines()) {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "# warning_threshold = {}", fmt_f64(self.config.warning_threshold));
        let _ = writeln!(s, "# alert_threshold = {}", fmt_f64(self.config.alert_threshold));
        let _ = writeln!(s, "# smoothing_window = {}", self.config.window);
        s.push_str("window_index,timestamp,hi,hi_smoothed,warning,alert\n");
        let mut w = self.warnings.iter().peekable();
        let mut a = self.alerts.iter().peekable();
        for i in 0..self.len() {
            let warn = w.next_if(|&&j| j == i).is_some();
            let alert = a.next_if(|&&j| j == i).is_some();
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{}",
                self.timestamps[i],
                fmt_f64(self.hi[i]),
                fmt_f64(self.hi_smoothed[i]),
                u8::from(warn),
                u8::from(alert)
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(probs: &[f64], window: usize) -> HealthSeries {
        let ts: Vec<i64> = (0..probs.len() as i64).map(|i| 600 * i).collect();
        HealthSeries::compute(
            probs,
            &ts,
            HealthConfig {
                window,
                ..HealthConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn index_examples() {
        assert_eq!(health_index(&[0.0, 1.0, 0.75]).unwrap(), vec![1.0, 0.0, 0.25]);
        assert!(health_index(&[1.5]).is_err());
        assert!(health_index(&[f64::NAN]).is_err());
        let s = series(&[0.75], 1);
        assert!(s.alerts.is_empty());
    }

    #[test]
    fn smoothing_examples() {
        let x = [0.3, 0.9, 0.1];
        assert_eq!(smooth_hi(&x, 1), x.to_vec());
        assert_eq!(smooth_hi(&[0.4; 5], 3), vec![0.4; 5]);
        assert_eq!(smooth_hi(&[1.0, 0.0], 2), vec![1.0, 0.5]);
    }

    #[test]
    fn alarm_examples() {
        assert!(series(&[0.0; 10], 3).extract_alarms().is_empty());
        let mut p = vec![0.0; 10];
        p[4] = 0.8;
        let s = series(&p, 1);
        assert_eq!(s.alerts, vec![4]);
        let alarms = s.extract_alarms();
        assert_eq!(alarms.iter().filter(|a| a.kind == AlarmKind::Alert).count(), 1);
        assert_eq!(alarms.last().unwrap().timestamp, 2400);
        let s = series(&[0.7; 8], 4);
        assert_eq!(s.warnings, (0..8).collect::<Vec<_>>());
        assert!(s.alerts.is_empty());
    }

    #[test]
    fn csv_layout() {
        let s = series(&[0.0, 0.8], 1);
        let csv = s.to_csv(&["run = demo".into()]);
        assert!(csv.starts_with("# run = demo\n# warning_threshold"));
        assert!(csv.contains("window_index,timestamp,hi,hi_smoothed,warning,alert\n"));
        assert!(csv.trim_end().ends_with(",1,1"));
    }

    proptest! {
        #[test]
        fn hi_plus_p_is_one(p in prop::collection::vec(0.0f64..=1.0, 0..100)) {
            let hi = health_index(&p).unwrap();
            for (h, q) in hi.iter().zip(&p) {
                prop_assert_eq!(*h, 1.0 - q);
            }
        }

        #[test]
        fn smoothing_is_monotone(a in prop::collection::vec(0.0f64..=1.0, 1..120),
                                 bump in prop::collection::vec(0.0f64..=0.5, 120),
                                 window in 1usize..70) {
            let b: Vec<f64> = a.iter().zip(&bump).map(|(x, d)| x + d).collect();
            let sa = smooth_hi(&a, window);
            let sb = smooth_hi(&b, window);
            prop_assert!(sa.iter().zip(&sb).all(|(x, y)| x <= y));
        }

        #[test]
        fn alarm_sets_exact(p in prop::collection::vec(0.0f64..=1.0, 0..150), window in 1usize..40) {
            let s = series(&p, window);
            let warn: Vec<usize> = (0..p.len()).filter(|&i| s.hi_smoothed[i] < 0.5).collect();
            let alert: Vec<usize> = (0..p.len()).filter(|&i| s.hi[i] < 0.25).collect();
            prop_assert_eq!(&s.warnings, &warn);
            prop_assert_eq!(&s.alerts, &alert);
            prop_assert_eq!(s.extract_alarms().len(), warn.len() + alert.len());
            prop_assert!(s.hi_smoothed.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
