//! Distribution shape classification and the transforms it selects:
//! Yeo-Johnson power transform and quantile winsorization.

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeClass {
    NearSymmetric,
    ModeratelySkewed,
    HeavilySkewed,
}

impl ShapeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ShapeClass::NearSymmetric => "near_symmetric",
            ShapeClass::ModeratelySkewed => "moderately_skewed",
            ShapeClass::HeavilySkewed => "heavily_skewed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "near_symmetric" => Some(ShapeClass::NearSymmetric),
            "moderately_skewed" => Some(ShapeClass::ModeratelySkewed),
            "heavily_skewed" => Some(ShapeClass::HeavilySkewed),
            _ => None,
        }
    }
}

/// Cutoffs for [`classify_distribution`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeThresholds {
    /// `|g1|` below this is near-symmetric.
    pub skew_moderate: f64,
    /// `|g1|` at or above this is heavily skewed.
    pub skew_heavy: f64,
    /// Excess kurtosis at or above this is heavily skewed regardless of `g1`.
    pub kurtosis_gate: f64,
}

impl Default for ShapeThresholds {
    fn default() -> Self {
        Self {
            skew_moderate: 0.5,
            skew_heavy: 2.0,
            kurtosis_gate: 10.0,
        }
    }
}

/// Classifies a column by sample skewness and excess kurtosis. Missing
/// values are ignored; a zero-variance column is near-symmetric.
pub fn classify_distribution(column: &[f64], thresholds: &ShapeThresholds) -> Result<ShapeClass> {
    let values: Vec<f64> = column.iter().copied().filter(|v| !v.is_nan()).collect();
    if values.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 non-missing values to classify, got {}",
            values.len()
        )));
    }
    let Some((g1, g2)) = stats::skew_kurtosis(&values) else {
        return Ok(ShapeClass::NearSymmetric);
    };
    let a = g1.abs();
    Ok(if a < thresholds.skew_moderate {
        ShapeClass::NearSymmetric
    } else if a < thresholds.skew_heavy && g2 < thresholds.kurtosis_gate {
        ShapeClass::ModeratelySkewed
    } else {
        ShapeClass::HeavilySkewed
    })
}

pub fn yeo_johnson(lambda: f64, x: f64) -> f64 {
    if lambda == 1.0 {
        return x;
    }
    if x >= 0.0 {
        if lambda.abs() < 1e-12 {
            x.ln_1p()
        } else {
            (lambda * x.ln_1p()).exp_m1() / lambda
        }
    } else if (lambda - 2.0).abs() < 1e-12 {
        -(-x).ln_1p()
    } else {
        -((2.0 - lambda) * (-x).ln_1p()).exp_m1() / (2.0 - lambda)
    }
}

/// Gaussian profile log-likelihood of the transformed sample, including
/// the Jacobian term `(λ − 1) Σ sign(x) ln(|x| + 1)`.
pub fn yeo_johnson_log_likelihood(values: &[f64], lambda: f64) -> f64 {
    let n = values.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut jac = 0.0;
    let transformed: Vec<f64> = values.iter().map(|&x| yeo_johnson(lambda, x)).collect();
    for (&x, &y) in values.iter().zip(&transformed) {
        sum += y;
        jac += x.signum() * x.abs().ln_1p();
    }
    let mean = sum / n;
    for &y in &transformed {
        sum_sq += (y - mean) * (y - mean);
    }
    let var = sum_sq / n;
    if !var.is_finite() || var <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let ll = -0.5 * n * var.ln() + (lambda - 1.0) * jac;
    if ll.is_finite() {
        ll
    } else {
        f64::NEG_INFINITY
    }
}

const LAMBDA_MIN: f64 = -5.0;
const LAMBDA_MAX: f64 = 5.0;
const LAMBDA_STEP: f64 = 0.1;
const LAMBDA_TOL: f64 = 1e-4;

/// Maximum-likelihood λ: a coarse grid over [−5, 5] in steps of 0.1, then
/// golden-section refinement around the best grid point until the bracket
/// is narrower than 1e−4.
pub fn fit_yeo_johnson(column: &[f64]) -> Result<f64> {
    let values: Vec<f64> = column.iter().copied().filter(|v| v.is_finite()).collect();
    if values.len() < 2 || stats::variance(&values) <= 0.0 {
        return Err(Error::Degenerate("Yeo-Johnson fit needs a non-constant column".into()));
    }
    let ll = |l: f64| yeo_johnson_log_likelihood(&values, l);

    let steps = ((LAMBDA_MAX - LAMBDA_MIN) / LAMBDA_STEP).round() as usize;
    let mut best = (LAMBDA_MIN, f64::NEG_INFINITY);
    for i in 0..=steps {
        let l = LAMBDA_MIN + i as f64 * LAMBDA_STEP;
        let v = ll(l);
        if v > best.1 {
            best = (l, v);
        }
    }
    if best.1 == f64::NEG_INFINITY {
        return Err(Error::Degenerate("Yeo-Johnson likelihood is not finite anywhere".into()));
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = (best.0 - LAMBDA_STEP).max(LAMBDA_MIN);
    let mut b = (best.0 + LAMBDA_STEP).min(LAMBDA_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = ll(c);
    let mut fd = ll(d);
    while b - a > LAMBDA_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = ll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = ll(d);
        }
    }
    let refined = 0.5 * (a + b);
    // Never return something worse than the grid optimum.
    Ok(if ll(refined) >= best.1 { refined } else { best.0 })
}

/// Quantile clip bounds at percentiles `p_lo < p_hi` (linear interpolation).
pub fn winsorize_fit(column: &[f64], p_lo: f64, p_hi: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p_lo) || !(0.0..=1.0).contains(&p_hi) || p_lo >= p_hi {
        return Err(Error::Invalid(format!(
            "winsorize percentiles must satisfy 0 <= lo < hi <= 1, got ({p_lo}, {p_hi})"
        )));
    }
    let values: Vec<f64> = column.iter().copied().filter(|v| !v.is_nan()).collect();
    if values.is_empty() {
        return Err(Error::Empty("cannot winsorize an empty column"));
    }
    let sorted = stats::sorted_copy(&values);
    Ok((
        stats::quantile_sorted(&sorted, p_lo),
        stats::quantile_sorted(&sorted, p_hi),
    ))
}

pub fn winsorize(x: f64, lo: f64, hi: f64) -> f64 {
    x.clamp(lo, hi)
}
