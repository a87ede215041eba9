//! PCA reconstruction-error detector.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub mean: Vec<f64>,
    /// Unit principal axes, largest eigenvalue first.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

/// Principal axes of the population covariance of `x`. Each axis is
/// oriented so that its largest-magnitude entry (first on ties) is
/// positive.
pub fn fit_pca(x: &[Vec<f64>], n_components: usize) -> Result<PcaFit> {
    let n = x.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 1, got: n });
    }
    let d = x[0].len();
    if n_components == 0 || n_components > d {
        return Err(Error::Config(format!("n_components = {n_components} must lie in 1..={d}")));
    }
    let mut mean = vec![0.0; d];
    for row in x {
        if row.len() != d {
            return Err(Error::Dimension { expected: d, got: row.len() });
        }
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / n as f64;
    if !(cov.trace() > 0.0) || !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("PCA input has zero variance".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(n_components);
    let mut eigenvalues = Vec::with_capacity(n_components);
    for &j in order.iter().take(n_components) {
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, a)| if a.abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        components.push(v);
        eigenvalues.push(eig.eigenvalues[j]);
    }
    Ok(PcaFit {
        mean,
        components,
        eigenvalues,
    })
}

/// Squared distance between `x` and its projection onto the retained
/// subspace (through the mean).
pub fn reconstruction_error(fit: &PcaFit, x: &[f64]) -> f64 {
    let c: Vec<f64> = x.iter().zip(&fit.mean).map(|(a, m)| a - m).collect();
    let mut recon = vec![0.0; c.len()];
    for v in &fit.components {
        let coef: f64 = v.iter().zip(&c).map(|(a, b)| a * b).sum();
        for (r, a) in recon.iter_mut().zip(v) {
            *r += coef * a;
        }
    }
    c.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum()
}
