//! Random forest of CART trees.

use rand::Rng;
use rayon::prelude::*;

use super::tree::{fit_tree_presorted, CartParams, Presorted, Tree};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

/// Fits `n_trees` trees, each on a bootstrap sample of size `n` drawn from
/// RNG stream `t` of the seed, which also drives that tree's per-split
/// feature subsets. `w` holds per-sample (class) weights.
pub fn fit_forest(x: &[Vec<f64>], y: &[bool], w: &[f64], p: &ForestParams) -> Result<Vec<Tree>> {
    if x.is_empty() {
        return Err(Error::Empty("cannot fit a forest on zero samples"));
    }
    if !(y.iter().any(|&v| v) && y.iter().any(|&v| !v)) {
        return Err(Error::Degenerate("random forest needs both classes".into()));
    }
    if p.n_trees == 0 {
        return Err(Error::Config("n_trees must be >= 1".into()));
    }
    let d = x[0].len();
    let cart = CartParams {
        max_depth: p.max_depth,
        min_samples_leaf: p.min_samples_leaf,
        max_features: Some(p.max_features.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).clamp(1, d.max(1))),
    };
    let presorted = Presorted::new(x);
    (0..p.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::stream(p.seed, t as u64));
            let weights: Vec<f64> = if p.bootstrap {
                let mut counts = vec![0u32; x.len()];
                for _ in 0..x.len() {
                    counts[rng.random_range(0..x.len())] += 1;
                }
                w.iter().zip(&counts).map(|(wi, &c)| wi * f64::from(c)).collect()
            } else {
                w.to_vec()
            };
            fit_tree_presorted(x, y, &weights, &cart, Some(&mut rng), &presorted)
        })
        .collect()
}

pub fn predict(trees: &[Tree], x: &[f64]) -> f64 {
    trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64
}
