//! KMeans distance detector.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-6;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid (first on ties).
pub fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(j, c)| (j, sq_dist(c, x)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Lloyd's algorithm from a farthest-point initialization whose first
/// centroid is a seeded uniform pick. Empty clusters are reseeded to the
/// point farthest from its assigned centroid.
pub fn fit_kmeans(x: &[Vec<f64>], k: usize, seed_: u64) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if n < k {
        return Err(Error::TooShort { needed: k - 1, got: n });
    }
    let d = x[0].len();
    let mut rng = seed::rng(seed_);
    let mut centroids = vec![x[rng.random_range(0..n)].clone()];
    let mut min_d: Vec<f64> = x.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let far = (0..n).fold(0, |b, i| if min_d[i] > min_d[b] { i } else { b });
        centroids.push(x[far].clone());
        for (m, r) in min_d.iter_mut().zip(x) {
            *m = m.min(sq_dist(r, &x[far]));
        }
    }

    for _ in 0..MAX_ITERATIONS {
        let assign: Vec<(usize, f64)> = x.par_iter().map(|r| nearest(&centroids, r)).collect();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (r, &(j, _)) in x.iter().zip(&assign) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(r) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            if counts[j] > 0 {
                next.push(sums[j].iter().map(|s| s / counts[j] as f64).collect::<Vec<_>>());
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None, |b: Option<usize>, i| match b {
                        Some(b) if assign[b].1 >= assign[i].1 => Some(b),
                        _ => Some(i),
                    })
                    .unwrap_or(0);
                taken[far] = true;
                next.push(x[far].clone());
            }
        }
        let moved = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if moved < TOLERANCE {
            break;
        }
    }
    Ok(centroids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn single_cluster_is_mean() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let c = fit_kmeans(&x, 1, 3).unwrap();
        assert!((c[0][0] - 4.5).abs() < 1e-12 && (c[0][1] - 9.0).abs() < 1e-12);
        let (_, d2) = nearest(&c, &[4.5, 9.0]);
        assert_eq!(d2, 0.0);
    }

    #[test]
    fn two_blobs() {
        let mut rng = seed::rng(12);
        let mut x = Vec::new();
        for i in 0..400 {
            let c = if i % 2 == 0 { [0.0, 0.0] } else { [10.0, 10.0] };
            x.push(vec![
                c[0] + rng.sample::<f64, _>(StandardNormal),
                c[1] + rng.sample::<f64, _>(StandardNormal),
            ]);
        }
        let mut c = fit_kmeans(&x, 2, 5).unwrap();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!(c[0][0].abs() < 0.5 && c[0][1].abs() < 0.5, "{c:?}");
        assert!((c[1][0] - 10.0).abs() < 0.5 && (c[1][1] - 10.0).abs() < 0.5, "{c:?}");
    }

    #[test]
    fn duplicate_points_reseed_and_errors() {
        let x = vec![vec![1.0]; 5];
        let c = fit_kmeans(&x, 3, 0).unwrap();
        assert_eq!(c.len(), 3);
        assert!(fit_kmeans(&x, 6, 0).is_err());
        assert!(fit_kmeans(&x, 0, 0).is_err());
    }
}
