//! Small descriptive-statistics helpers used across modules.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `p·(n−1)`). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_sorted(&sorted_copy(xs), 0.5)
}

/// Moment-based sample skewness `g1 = m3 / m2^{3/2}` and excess kurtosis
/// `g2 = m4 / m2² − 3`. Returns `None` for fewer than 3 values or zero variance.
pub fn skew_kurtosis(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 3 {
        return None;
    }
    let n = xs.len() as f64;
    let m = mean(xs);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 == 0.0 || m2 <= 1e-24 * m * m {
        return None;
    }
    Some((m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0))
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

/// Trailing moving average; the first `window − 1` entries average the
/// available prefix.
pub fn trailing_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for i in 0..xs.len() {
        sum += xs[i];
        if i >= window {
            sum -= xs[i - window];
        }
        // Recompute periodically so long runs do not accumulate drift.
        if i % 4096 == 4095 {
            let lo = (i + 1).saturating_sub(window);
            sum = xs[lo..=i].iter().sum();
        }
        let len = (i + 1).min(window);
        out.push(sum / len as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile_sorted(&v, 0.01) - 1.99).abs() < 1e-12);
        assert!((quantile_sorted(&v, 0.99) - 99.01).abs() < 1e-12);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 100.0);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }

    #[test]
    fn moments() {
        let (g1, _) = skew_kurtosis(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(g1, 0.0);
        assert!(skew_kurtosis(&[2.0, 2.0, 2.0]).is_none());
    }

    #[test]
    fn trailing_mean_prefix_rule() {
        assert_eq!(trailing_mean(&[1.0, 0.0], 2), vec![1.0, 0.5]);
        assert_eq!(trailing_mean(&[1.0, 2.0, 3.0, 4.0], 1), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(trailing_mean(&[1.0, 2.0, 3.0, 4.0], 3), vec![1.0, 1.5, 2.0, 3.0]);
    }

    #[test]
    fn pearson_of_copy_is_one() {
        let a = [1.0, 2.0, 4.0, 8.0];
        assert!((pearson(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&a, &[1.0; 4]), 0.0);
    }
}
