use super::frame::TimeSeriesFrame;
use crate::error::{Error, Result};

/// Normal-operating-condition intervals, closed on both ends, sorted and
/// pairwise disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NocIntervals {
    intervals: Vec<(i64, i64)>,
}

impl NocIntervals {
    pub fn new(mut pairs: Vec<(i64, i64)>) -> Result<Self> {
        for &(start, end) in &pairs {
            if end <= start {
                return Err(Error::InvalidInterval { start, end });
            }
        }
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            // Closed intervals: sharing an endpoint is an overlap.
            if w[1].0 <= w[0].1 {
                return Err(Error::Overlap {
                    a_start: w[0].0,
                    a_end: w[0].1,
                    b_start: w[1].0,
                    b_end: w[1].1,
                });
            }
        }
        Ok(Self { intervals: pairs })
    }

    pub fn intervals(&self) -> &[(i64, i64)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, t: i64) -> bool {
        // Last interval starting at or before t.
        let idx = self.intervals.partition_point(|&(s, _)| s <= t);
        idx > 0 && t <= self.intervals[idx - 1].1
    }
}

/// Labels each sample normal iff its timestamp lies in some closed interval.
pub fn label_from_noc(frame: TimeSeriesFrame, noc: &NocIntervals) -> TimeSeriesFrame {
    let labels: Vec<bool> = frame.timestamps().iter().map(|&t| noc.contains(t)).collect();
    frame
        .with_labels(labels)
        .expect("label count equals sample count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(ts: Vec<i64>) -> TimeSeriesFrame {
        let n = ts.len();
        TimeSeriesFrame::new(ts, vec!["a".into()], vec![vec![0.0; n]]).unwrap()
    }

    #[test]
    fn containment_examples() {
        let noc = NocIntervals::new(vec![(10, 20)]).unwrap();
        let f = label_from_noc(frame(vec![5, 15, 25]), &noc);
        assert_eq!(f.labels().unwrap(), &[false, true, false]);

        let f = label_from_noc(frame(vec![5, 15, 25]), &NocIntervals::default());
        assert_eq!(f.labels().unwrap(), &[false, false, false]);

        let f = label_from_noc(frame(vec![10, 20, 21]), &noc);
        assert_eq!(f.labels().unwrap(), &[true, true, false]);
    }

    proptest! {
        #[test]
        fn labels_match_brute_force(
            raw in prop::collection::vec((0i64..200, 1i64..15), 0..8),
            n in 1usize..60,
        ) {
            // Build disjoint intervals from (gap, length) pairs.
            let mut pairs = Vec::new();
            let mut cursor = 0i64;
            for (gap, len) in raw {
                let s = cursor + gap % 20 + 1;
                pairs.push((s, s + len));
                cursor = s + len;
            }
            let noc = NocIntervals::new(pairs.clone()).unwrap();
            let ts: Vec<i64> = (0..n as i64).map(|i| i * 3).collect();
            let labeled = label_from_noc(frame(ts.clone()), &noc);
            for (t, &l) in ts.iter().zip(labeled.labels().unwrap()) {
                let expect = pairs.iter().any(|&(s, e)| s <= *t && *t <= e);
                prop_assert_eq!(l, expect);
            }
        }
    }
}
