use std::collections::HashSet;
use std::ops::Range;

use crate::error::{Error, Result};

/// Timestamped multichannel sensor matrix.
///
/// Values are stored column-major (one `Vec` per channel). Missing readings
/// are `NaN`. Labels, when present, are `true` for normal samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    timestamps: Vec<i64>,
    channels: Vec<String>,
    columns: Vec<Vec<f64>>,
    labels: Option<Vec<bool>>,
}

impl TimeSeriesFrame {
    pub fn new(timestamps: Vec<i64>, channels: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if channels.len() != columns.len() {
            return Err(Error::Dimension {
                expected: channels.len(),
                got: columns.len(),
            });
        }
        for col in &columns {
            if col.len() != timestamps.len() {
                return Err(Error::Dimension {
                    expected: timestamps.len(),
                    got: col.len(),
                });
            }
        }
        for (row, w) in timestamps.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::NonMonotonic {
                    row: row + 1,
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        let mut seen = HashSet::new();
        for name in &channels {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateChannel(name.clone()));
            }
        }
        Ok(Self {
            timestamps,
            channels,
            columns,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != self.timestamps.len() {
            return Err(Error::Dimension {
                expected: self.timestamps.len(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn n_samples(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channel_index(name).map(|i| self.columns[i].as_slice())
    }

    /// Per-sample labels, `true` = normal.
    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[bool]> {
        self.labels()
            .ok_or_else(|| Error::Invalid("frame has no labels".into()))
    }

    /// Value at (sample, channel).
    pub fn value(&self, sample: usize, channel: usize) -> f64 {
        self.columns[channel][sample]
    }

    /// Rows in `range`, all channels, labels carried along.
    pub fn slice(&self, range: Range<usize>) -> TimeSeriesFrame {
        TimeSeriesFrame {
            timestamps: self.timestamps[range.clone()].to_vec(),
            channels: self.channels.clone(),
            columns: self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
            labels: self.labels.as_ref().map(|l| l[range].to_vec()),
        }
    }

    /// Replaces the channel set, keeping timestamps and labels.
    pub fn with_columns(&self, channels: Vec<String>, columns: Vec<Vec<f64>>) -> Result<TimeSeriesFrame> {
        let frame = TimeSeriesFrame::new(self.timestamps.clone(), channels, columns)?;
        Ok(TimeSeriesFrame {
            labels: self.labels.clone(),
            ..frame
        })
    }

    /// Median spacing between consecutive timestamps, in seconds.
    pub fn median_cadence(&self) -> Option<f64> {
        if self.timestamps.len() < 2 {
            return None;
        }
        let gaps: Vec<f64> = self
            .timestamps
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64)
            .collect();
        Some(crate::stats::median(&gaps))
    }
}
