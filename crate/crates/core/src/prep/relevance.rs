//! Univariate relevance of a channel to the binary target.

use crate::error::{Error, Result};

/// One-way ANOVA F statistic for the two groups split by `labels`.
/// A perfect separator (zero within-group variance, distinct means) scores
/// `+∞`.
pub fn anova_f(column: &[f64], labels: &[bool]) -> Result<f64> {
    if column.len() != labels.len() {
        return Err(Error::Dimension {
            expected: column.len(),
            got: labels.len(),
        });
    }
    let (mut n1, mut s1, mut n0, mut s0) = (0usize, 0.0, 0usize, 0.0);
    for (&x, &l) in column.iter().zip(labels) {
        if l {
            n1 += 1;
            s1 += x;
        } else {
            n0 += 1;
            s0 += x;
        }
    }
    if n0 == 0 || n1 == 0 {
        return Err(Error::Degenerate("ANOVA needs both classes present".into()));
    }
    let n = n0 + n1;
    let m1 = s1 / n1 as f64;
    let m0 = s0 / n0 as f64;
    let grand = (s0 + s1) / n as f64;
    let ssb = n1 as f64 * (m1 - grand).powi(2) + n0 as f64 * (m0 - grand).powi(2);
    let ssw: f64 = column
        .iter()
        .zip(labels)
        .map(|(&x, &l)| {
            let m = if l { m1 } else { m0 };
            (x - m) * (x - m)
        })
        .sum();
    if ssw == 0.0 || n == 2 {
        return Ok(if ssb > 0.0 { f64::INFINITY } else { 0.0 });
    }
    Ok(ssb / (ssw / (n - 2) as f64))
}

/// Plug-in mutual information (nats) between an equal-width-binned column
/// and the binary target.
pub fn mutual_info(column: &[f64], labels: &[bool], n_bins: usize) -> Result<f64> {
    if n_bins < 2 {
        return Err(Error::Invalid("mutual_info needs n_bins >= 2".into()));
    }
    if column.len() != labels.len() {
        return Err(Error::Dimension {
            expected: column.len(),
            got: labels.len(),
        });
    }
    if column.is_empty() {
        return Ok(0.0);
    }
    let (lo, hi) = column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(hi > lo) {
        return Ok(0.0);
    }
    let width = hi - lo;
    let mut counts = vec![[0usize; 2]; n_bins];
    for (&x, &l) in column.iter().zip(labels) {
        let b = (((x - lo) / width) * n_bins as f64).floor() as usize;
        counts[b.min(n_bins - 1)][usize::from(l)] += 1;
    }
    let n = column.len() as f64;
    let py = [
        labels.iter().filter(|l| !**l).count() as f64 / n,
        labels.iter().filter(|l| **l).count() as f64 / n,
    ];
    let mut mi = 0.0;
    for cell in &counts {
        let pb = (cell[0] + cell[1]) as f64 / n;
        for y in 0..2 {
            if cell[y] > 0 {
                let pby = cell[y] as f64 / n;
                mi += pby * (pby / (pb * py[y])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}
