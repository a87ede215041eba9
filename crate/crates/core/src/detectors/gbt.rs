//! Second-order gradient-boosted trees on the logistic loss.

use rand::Rng;
use rayon::prelude::*;

use super::tree::{Node, Presorted, Tree};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    pub reg_lambda: f64,
    pub gamma: f64,
    /// Row fraction drawn (without replacement) per round.
    pub subsample: f64,
    pub seed: u64,
}

/// Optimal leaf weight `−G / (H + λ)`; zero when the denominator vanishes.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let den = h + lambda;
    if den > 0.0 {
        -g / den
    } else {
        0.0
    }
}

/// Structure-score gain of splitting `(G, H)` into `(G_L, H_L)` and
/// `(G_R, H_R)`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let term = |g: f64, h: f64| if h + lambda > 0.0 { g * g / (h + lambda) } else { 0.0 };
    0.5 * (term(gl, hl) + term(gr, hr) - term(gl + gr, hl + hr)) - gamma
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weighted mean logistic loss.
pub fn logloss(margins: &[f64], y: &[bool], w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&m, &yy), &wi) in margins.iter().zip(y).zip(w) {
        // log(1 + e^{-m}) for positives, log(1 + e^{m}) for negatives.
        let z = if yy { -m } else { m };
        let l = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        num += wi * l;
        den += wi;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtFit {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Training loss before the first round and after every round.
    pub loss_trace: Vec<f64>,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    g: &'a [f64],
    h: &'a [f64],
    p: &'a GbtParams,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

impl Builder<'_> {
    fn build(&mut self, node: Presorted, depth: usize) -> usize {
        let members = node.members();
        let n = members.len();
        let (gs, hs) = members.iter().fold((0.0, 0.0), |(a, b), &i| (a + self.g[i], b + self.h[i]));
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: leaf_weight(gs, hs, self.p.reg_lambda),
        });
        let msl = self.p.min_samples_leaf.max(1);
        if depth >= self.p.max_depth || n < 2 * msl || node.cols.is_empty() {
            return me;
        }
        let (x, g, h, p) = (self.x, self.g, self.h, self.p);
        let best = node
            .cols
            .par_iter()
            .enumerate()
            .filter_map(|(f, idx)| {
                let (mut gl, mut hl) = (0.0, 0.0);
                let mut best: Option<(f64, f64)> = None;
                for k in 0..n - 1 {
                    let i = idx[k];
                    gl += g[i];
                    hl += h[i];
                    let (a, b) = (x[i][f], x[idx[k + 1]][f]);
                    if a == b || k + 1 < msl || n - k - 1 < msl {
                        continue;
                    }
                    let gain = split_gain(gl, hl, gs - gl, hs - hl, p.reg_lambda, p.gamma);
                    if gain > 0.0 && best.is_none_or(|(bg, _)| gain > bg) {
                        best = Some((gain, a + (b - a) / 2.0));
                    }
                }
                best.map(|(gain, thr)| (gain, f, thr))
            })
            .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
        let Some((_, feature, threshold)) = best else {
            return me;
        };
        for &i in node.members() {
            self.goes_left[i] = x[i][feature] <= threshold;
        }
        let (l, r) = node.split(&self.goes_left);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

/// Boosts `n_rounds` regression trees on the gradients and hessians of the
/// weighted logistic loss. The base score is the log-odds of the weighted
/// positive rate; each tree's leaf weights are scaled by the learning rate.
pub fn fit_gbt(x: &[Vec<f64>], y: &[bool], w: &[f64], p: &GbtParams) -> Result<GbtFit> {
    if x.is_empty() {
        return Err(Error::Empty("cannot boost on zero samples"));
    }
    if !(p.learning_rate > 0.0 && p.learning_rate <= 1.0) {
        return Err(Error::Config(format!("learning rate {} must lie in (0, 1]", p.learning_rate)));
    }
    if !(p.reg_lambda >= 0.0 && p.gamma >= 0.0) {
        return Err(Error::Config("reg_lambda and gamma must be >= 0".into()));
    }
    if !(p.subsample > 0.0 && p.subsample <= 1.0) {
        return Err(Error::Config(format!("subsample {} must lie in (0, 1]", p.subsample)));
    }
    let (wp, wt) = y
        .iter()
        .zip(w)
        .fold((0.0, 0.0), |(a, b), (&yy, &wi)| (a + if yy { wi } else { 0.0 }, b + wi));
    if !(wp > 0.0 && wp < wt) {
        return Err(Error::Degenerate("gradient boosting needs both classes".into()));
    }
    let p0 = wp / wt;
    let base_score = (p0 / (1.0 - p0)).ln();
    let n = x.len();
    let presorted = Presorted::new(x);
    let mut margins = vec![base_score; n];
    let mut loss_trace = vec![logloss(&margins, y, w)];
    let mut trees = Vec::with_capacity(p.n_rounds);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for round in 0..p.n_rounds {
        for i in 0..n {
            let q = sigmoid(margins[i]);
            g[i] = w[i] * (q - f64::from(u8::from(y[i])));
            h[i] = w[i] * q * (1.0 - q);
        }
        let root = if p.subsample < 1.0 {
            let mut rng = seed::rng(seed::stream(p.seed, round as u64));
            let keep: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < p.subsample).collect();
            presorted.filter(|i| keep[i] && w[i] > 0.0)
        } else {
            presorted.filter(|i| w[i] > 0.0)
        };
        let mut b = Builder {
            x,
            g: &g,
            h: &h,
            p,
            nodes: Vec::new(),
            goes_left: vec![false; n],
        };
        b.build(root, 0);
        let mut tree = Tree { nodes: b.nodes };
        for node in &mut tree.nodes {
            if let Node::Leaf { value } = node {
                *value *= p.learning_rate;
            }
        }
        for (m, row) in margins.iter_mut().zip(x) {
            *m += tree.predict(row);
        }
        loss_trace.push(logloss(&margins, y, w));
        trees.push(tree);
    }
    Ok(GbtFit {
        base_score,
        trees,
        loss_trace,
    })
}

pub fn margin(base_score: f64, trees: &[Tree], x: &[f64]) -> f64 {
    base_score + trees.iter().map(|t| t.predict(x)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert, prop_assume, proptest, ProptestConfig};
    use rand_distr::StandardNormal;

    fn params(rounds: usize, eta: f64) -> GbtParams {
        GbtParams {
            n_rounds: rounds,
            max_depth: 3,
            min_samples_leaf: 1,
            learning_rate: eta,
            reg_lambda: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            seed: 0,
        }
    }

    #[test]
    fn single_sample_leaf_weight() {
        let p0: f64 = 0.3;
        let g = p0 - 1.0;
        let h = p0 * (1.0 - p0);
        assert!((leaf_weight(g, h, 0.0) - (1.0 - p0) / (p0 * (1.0 - p0))).abs() < 1e-12);
        assert_eq!(leaf_weight(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn zero_gradient_split_rejected() {
        assert_eq!(split_gain(0.0, 2.0, 0.0, 3.0, 1.0, 0.5), -0.5);
        assert_eq!(split_gain(0.0, 2.0, 0.0, 3.0, 1.0, 0.0), 0.0);
    }

    fn blobs(seed_: u64, n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = seed::rng(seed_);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let pos = i % 4 == 0;
            let c = if pos { 2.0 } else { -1.0 };
            x.push(vec![
                c + rng.sample::<f64, _>(StandardNormal),
                c + rng.sample::<f64, _>(StandardNormal),
            ]);
            y.push(pos);
        }
        (x, y)
    }

    #[test]
    fn loss_non_increasing_on_separable_data() {
        let (x, y) = blobs(1, 400);
        let fit = fit_gbt(&x, &y, &vec![1.0; 400], &params(50, 0.1)).unwrap();
        assert_eq!(fit.loss_trace.len(), 51);
        for w in fit.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{w:?}");
        }
        assert!(fit.loss_trace[50] < 0.5 * fit.loss_trace[0]);
    }

    #[test]
    fn rejects_single_class_and_bad_params() {
        let (x, _) = blobs(2, 10);
        assert!(fit_gbt(&x, &[true; 10], &[1.0; 10], &params(3, 0.1)).is_err());
        let y: Vec<bool> = (0..10).map(|i| i < 5).collect();
        assert!(fit_gbt(&x, &y, &[1.0; 10], &params(3, 0.0)).is_err());
        assert!(fit_gbt(&x, &y, &[1.0; 10], &params(3, 1.5)).is_err());
    }

    #[test]
    fn subsampling_is_seeded() {
        let (x, y) = blobs(3, 200);
        let mut p = params(5, 0.3);
        p.subsample = 0.5;
        let a = fit_gbt(&x, &y, &vec![1.0; 200], &p).unwrap();
        let b = fit_gbt(&x, &y, &vec![1.0; 200], &p).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn loss_trace_monotone_small_eta(
            rows in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, any::<bool>()), 8..60),
            eta in 0.01f64..0.3,
        ) {
            let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
            let y: Vec<bool> = rows.iter().map(|r| r.2).collect();
            prop_assume!(y.iter().any(|&v| v) && y.iter().any(|&v| !v));
            let fit = fit_gbt(&x, &y, &vec![1.0; x.len()], &params(20, eta)).unwrap();
            for w in fit.loss_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", w);
            }
        }
    }
}
