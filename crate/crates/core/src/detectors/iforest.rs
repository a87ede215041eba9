//! Isolation forest.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{Node, Tree};
use crate::error::{Error, Result};
use crate::seed;

/// Average unsuccessful-search path length of a binary search tree over
/// `n` points: `2·H(n−1) − 2(n−1)/n`, with `c(0) = c(1) = 0`.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let harmonic: f64 = (1..n).map(|i| 1.0 / i as f64).sum();
    2.0 * harmonic - 2.0 * (n as f64 - 1.0) / n as f64
}

/// `2^(−E[h] / c(n))`.
pub fn anomaly_score(mean_path: f64, subsample: usize) -> f64 {
    let c = average_path_length(subsample);
    if c <= 0.0 {
        return 1.0;
    }
    2f64.powf(-mean_path / c)
}

fn grow(x: &[Vec<f64>], idx: &[usize], depth: usize, cap: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
    let me = nodes.len();
    nodes.push(Node::Leaf {
        value: idx.len() as f64,
    });
    if depth >= cap || idx.len() <= 1 {
        return me;
    }
    let d = x[0].len();
    let ranges: Vec<(usize, f64, f64)> = (0..d)
        .filter_map(|f| {
            let (lo, hi) = idx
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(x[i][f]), hi.max(x[i][f])));
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return me;
    }
    let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
    let mut threshold = rng.random_range(lo..hi);
    if threshold >= hi {
        threshold = lo;
    }
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
    let left = grow(x, &l, depth + 1, cap, rng, nodes);
    let right = grow(x, &r, depth + 1, cap, rng, nodes);
    nodes[me] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    me
}

/// Grows `n_trees` isolation trees on subsamples of size
/// `min(subsample, n)`; tree `t` uses RNG stream `t` of `seed`. Leaves
/// store their sample count.
pub fn fit_isolation_forest(x: &[Vec<f64>], n_trees: usize, subsample: usize, seed_: u64) -> Result<(usize, Vec<Tree>)> {
    if x.len() < 2 {
        return Err(Error::TooShort { needed: 1, got: x.len() });
    }
    if n_trees == 0 || subsample < 2 {
        return Err(Error::Config("isolation forest needs n_trees >= 1 and subsample >= 2".into()));
    }
    let psi = subsample.min(x.len());
    let cap = (psi as f64).log2().ceil() as usize;
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::stream(seed_, t as u64));
            let idx = sample(&mut rng, x.len(), psi).into_vec();
            let mut nodes = Vec::new();
            grow(x, &idx, 0, cap, &mut rng, &mut nodes);
            Tree { nodes }
        })
        .collect();
    Ok((psi, trees))
}

/// Path length of `x` in one tree, with `c(leaf size)` added at the leaf.
pub fn path_length(tree: &Tree, x: &[f64]) -> f64 {
    let (size, depth) = tree.descend(x);
    depth as f64 + average_path_length(size as usize)
}

pub fn score(trees: &[Tree], psi: usize, x: &[f64]) -> f64 {
    let mean = trees.iter().map(|t| path_length(t, x)).sum::<f64>() / trees.len() as f64;
    anomaly_score(mean, psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn formula_examples() {
        assert_eq!(anomaly_score(0.0, 256), 1.0);
        assert_eq!(average_path_length(2), 1.0);
        assert_eq!(anomaly_score(3.0, 2), 2f64.powf(-3.0));
        assert_eq!(average_path_length(1), 0.0);
        // H(3) = 11/6, c(4) = 11/3 - 3/2.
        assert!((average_path_length(4) - (11.0 / 3.0 - 1.5)).abs() < 1e-12);
    }

    #[test]
    fn far_outlier_scores_high() {
        let mut rng = seed::rng(4);
        let mut x: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)])
            .collect();
        x.push(vec![8.0, 8.0]);
        let (psi, trees) = fit_isolation_forest(&x, 100, 256, 11).unwrap();
        let mut blob: Vec<f64> = x[..500].iter().map(|r| score(&trees, psi, r)).collect();
        blob.sort_by(f64::total_cmp);
        let p95 = blob[(0.95 * 499.0) as usize];
        let out = score(&trees, psi, &x[500]);
        assert!(out > p95, "{out} vs {p95}");
        assert!(trees.iter().all(|t| t.depth() <= 8));
    }

    #[test]
    fn deterministic_and_validates() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let a = fit_isolation_forest(&x, 10, 16, 3).unwrap();
        let b = fit_isolation_forest(&x, 10, 16, 3).unwrap();
        assert_eq!(a, b);
        assert!(fit_isolation_forest(&x[..1], 10, 16, 3).is_err());
    }
}
