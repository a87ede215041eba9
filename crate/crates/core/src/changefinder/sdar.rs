//! Sequentially discounting AR(k) estimation.

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Lower bound on every variance the recursion divides by.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Solves the Toeplitz Yule-Walker system for AR coefficients `ω_1..ω_k`
/// given autocovariances `c_0..c_k`.
///
/// If a reflection coefficient is non-finite or has magnitude ≥ 1 the
/// recursion stops at the last stable order and the remaining coefficients
/// are zero.
pub fn levinson_durbin(autocov: &[f64]) -> Result<Vec<f64>> {
    let Some(&c0) = autocov.first() else {
        return Err(Error::Invalid("levinson_durbin needs at least c_0".into()));
    };
    if !(c0 > 0.0) {
        return Err(Error::Degenerate(format!("autocovariance c_0 = {c0} must be > 0")));
    }
    let k = autocov.len() - 1;
    let mut a = vec![0.0; k];
    let mut prev = vec![0.0; k];
    let mut err = c0;
    for m in 1..=k {
        let mut acc = autocov[m];
        for j in 1..m {
            acc -= a[j - 1] * autocov[m - j];
        }
        let kappa = acc / err;
        if !kappa.is_finite() || kappa.abs() >= 1.0 {
            break;
        }
        prev[..m - 1].copy_from_slice(&a[..m - 1]);
        a[m - 1] = kappa;
        for j in 1..m {
            a[j - 1] = prev[j - 1] - kappa * prev[m - j - 1];
        }
        err *= 1.0 - kappa * kappa;
        if !(err > 0.0) {
            break;
        }
    }
    Ok(a)
}

/// Online AR(k) model whose sufficient statistics decay geometrically with
/// rate `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdarState {
    r: f64,
    order: usize,
    mu: f64,
    autocov: Vec<f64>,
    coefs: Vec<f64>,
    sigma2: f64,
    /// Most recent observation first.
    lags: VecDeque<f64>,
    n_seen: usize,
}

impl SdarState {
    /// Fresh state. The mean is seeded by the first observation and the
    /// residual variance by the first squared residual (floored).
    pub fn new(r: f64, order: usize) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Config(format!("SDAR rate r = {r} must lie in (0, 1)")));
        }
        if order < 1 {
            return Err(Error::Config("SDAR order must be >= 1".into()));
        }
        Ok(Self {
            r,
            order,
            mu: 0.0,
            autocov: vec![0.0; order + 1],
            coefs: vec![0.0; order],
            sigma2: VARIANCE_FLOOR,
            lags: VecDeque::with_capacity(order + 1),
            n_seen: 0,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefs
    }

    pub fn autocovariances(&self) -> &[f64] {
        &self.autocov
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn n_seen(&self) -> usize {
        self.n_seen
    }

    /// Consumes one observation and returns its log-loss score
    /// `½ ln(2π σ²) + (x − x̂)² / (2σ²)`; zero while fewer than `order` lags
    /// are available.
    pub fn update(&mut self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite {
                index: self.n_seen,
                value: x,
            });
        }
        let r = self.r;
        self.mu = if self.n_seen == 0 { x } else { (1.0 - r) * self.mu + r * x };
        let dx = x - self.mu;
        self.autocov[0] = (1.0 - r) * self.autocov[0] + r * dx * dx;
        for (j, lag) in self.lags.iter().enumerate() {
            let c = &mut self.autocov[j + 1];
            *c = (1.0 - r) * *c + r * dx * (lag - self.mu);
        }

        if self.lags.len() < self.order {
            self.lags.push_front(x);
            self.n_seen += 1;
            return Ok(0.0);
        }

        self.coefs = if self.autocov[0] > VARIANCE_FLOOR {
            levinson_durbin(&self.autocov)?
        } else {
            vec![0.0; self.order]
        };
        let pred = self.mu
            + self
                .coefs
                .iter()
                .zip(&self.lags)
                .map(|(w, lag)| w * (lag - self.mu))
                .sum::<f64>();
        let resid = x - pred;
        self.sigma2 = if self.n_seen == self.order {
            resid * resid
        } else {
            (1.0 - r) * self.sigma2 + r * resid * resid
        }
        .max(VARIANCE_FLOOR);
        let score = 0.5 * (2.0 * PI * self.sigma2).ln() + resid * resid / (2.0 * self.sigma2);

        self.lags.push_front(x);
        self.lags.truncate(self.order);
        self.n_seen += 1;
        Ok(score)
    }
}
