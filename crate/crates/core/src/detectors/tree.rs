//! Binary decision trees and the weighted-Gini CART builder.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kvtext::{fmt_f64, parse_f64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Flat tree; the root is node 0. Samples with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Leaf value reached by `x` and its depth (root = 0).
    pub fn descend(&self, x: &[f64]) -> (f64, usize) {
        let mut i = 0;
        let mut depth = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return (value, depth),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature] <= threshold { left } else { right };
                    depth += 1;
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.descend(x).0
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// `;`-separated node records: `L value` or `S feature threshold left right`.
    pub fn encode(&self) -> String {
        self.nodes
            .iter()
            .map(|n| match *n {
                Node::Leaf { value } => format!("L {}", fmt_f64(value)),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => format!("S {feature} {} {left} {right}", fmt_f64(threshold)),
            })
            .collect::<Vec<_>>()
            .join("; ")
    }

    /// Parses [`Tree::encode`] output and checks that it is a well-formed
    /// tree over at most `n_features` features.
    pub fn decode(s: &str, n_features: usize) -> Result<Self> {
        let bad = |msg: String| Error::Invalid(format!("tree record: {msg}"));
        let mut nodes = Vec::new();
        for rec in s.split(';') {
            let parts: Vec<&str> = rec.split_whitespace().collect();
            let node = match parts.as_slice() {
                ["L", v] => Node::Leaf {
                    value: parse_f64(v).ok_or_else(|| bad(format!("bad leaf value `{v}`")))?,
                },
                ["S", f, t, l, r] => Node::Split {
                    feature: f.parse().map_err(|_| bad(format!("bad feature `{f}`")))?,
                    threshold: parse_f64(t).ok_or_else(|| bad(format!("bad threshold `{t}`")))?,
                    left: l.parse().map_err(|_| bad(format!("bad child `{l}`")))?,
                    right: r.parse().map_err(|_| bad(format!("bad child `{r}`")))?,
                },
                _ => return Err(bad(format!("cannot parse `{}`", rec.trim()))),
            };
            nodes.push(node);
        }
        let tree = Self { nodes };
        tree.check(n_features)?;
        Ok(tree)
    }

    /// Every non-root node has exactly one parent with a smaller index and
    /// split features are in range, so descent always terminates.
    fn check(&self, n_features: usize) -> Result<()> {
        let n = self.nodes.len();
        let mut parents = vec![0usize; n];
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } => {
                    if value.is_nan() {
                        return Err(Error::Invalid("tree leaf is NaN".into()));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= n_features || threshold.is_nan() {
                        return Err(Error::Invalid(format!("tree node {i}: bad split")));
                    }
                    for c in [left, right] {
                        if c <= i || c >= n {
                            return Err(Error::Invalid(format!("tree node {i}: bad child {c}")));
                        }
                        parents[c] += 1;
                    }
                }
            }
        }
        if n == 0 || parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(Error::Invalid("malformed tree structure".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
}

/// Per-feature lists of the same sample indices, each sorted by that
/// feature's value (ties by index). Splitting a node partitions every list
/// stably, so no node ever re-sorts.
#[derive(Debug, Clone)]
pub(crate) struct Presorted {
    pub cols: Vec<Vec<usize>>,
}

impl Presorted {
    pub fn new(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let cols = (0..d)
            .map(|f| {
                let mut idx: Vec<usize> = (0..x.len()).collect();
                idx.sort_unstable_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { cols }
    }

    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self {
            cols: self.cols.iter().map(|c| c.iter().copied().filter(|&i| keep(i)).collect()).collect(),
        }
    }

    pub fn members(&self) -> &[usize] {
        self.cols.first().map_or(&[], Vec::as_slice)
    }

    /// Splits by `goes_left[i]`.
    pub fn split(self, goes_left: &[bool]) -> (Self, Self) {
        let mut l = Vec::with_capacity(self.cols.len());
        let mut r = Vec::with_capacity(self.cols.len());
        for c in self.cols {
            let (a, b): (Vec<usize>, Vec<usize>) = c.into_iter().partition(|&i| goes_left[i]);
            l.push(a);
            r.push(b);
        }
        (Self { cols: l }, Self { cols: r })
    }
}

fn gini_mass(w: f64, pos: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let p = pos / w;
    w * 2.0 * p * (1.0 - p)
}

struct Cart<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    w: &'a [f64],
    params: CartParams,
    n_features: usize,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Cart<'_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < self.n_features => {
                let mut f = sample(rng, self.n_features, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.n_features).collect(),
        }
    }

    fn build(&mut self, node: Presorted, depth: usize) -> usize {
        let members = node.members();
        let n = members.len();
        let (wsum, pos) = members
            .iter()
            .fold((0.0, 0.0), |(w, p), &i| (w + self.w[i], p + if self.y[i] { self.w[i] } else { 0.0 }));
        let value = if wsum > 0.0 { pos / wsum } else { 0.0 };
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { value });
        let parent = gini_mass(wsum, pos);
        let msl = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || parent <= 0.0 || n < 2 * msl || self.n_features == 0 {
            return me;
        }

        let mut best: Option<Best> = None;
        for f in self.candidate_features() {
            let idx = &node.cols[f];
            let (mut wl, mut pl) = (0.0, 0.0);
            for k in 0..n - 1 {
                let i = idx[k];
                wl += self.w[i];
                if self.y[i] {
                    pl += self.w[i];
                }
                let (a, b) = (self.x[i][f], self.x[idx[k + 1]][f]);
                if a == b || k + 1 < msl || n - k - 1 < msl {
                    continue;
                }
                let gain = parent - gini_mass(wl, pl) - gini_mass(wsum - wl, pos - pl);
                let floor = best.as_ref().map_or(1e-12 * parent, |b| b.gain * (1.0 + 1e-12));
                if gain > floor {
                    best = Some(Best {
                        gain,
                        feature: f,
                        threshold: a + (b - a) / 2.0,
                    });
                }
            }
        }
        let Some(best) = best else {
            return me;
        };
        for &i in node.members() {
            self.goes_left[i] = self.x[i][best.feature] <= best.threshold;
        }
        let (l, r) = node.split(&self.goes_left);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[me] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        me
    }
}

fn check_inputs(x: &[Vec<f64>], y_len: usize, w_len: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Empty("cannot fit a tree on zero samples"));
    }
    if y_len != x.len() || w_len != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y_len.min(w_len),
        });
    }
    let d = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            got: row.len(),
        });
    }
    Ok(())
}

/// CART classification tree on rows `x` with binary targets `y` and sample
/// weights `w` (zero-weight rows are ignored). Split thresholds are
/// midpoints between consecutive distinct values; ties in gain keep the
/// lower feature index, then the lower threshold. With `rng`, each split
/// examines `max_features` features drawn without replacement.
pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[bool],
    w: &[f64],
    params: &CartParams,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tree> {
    check_inputs(x, y.len(), w.len())?;
    fit_tree_presorted(x, y, w, params, rng, &Presorted::new(x))
}

pub(crate) fn fit_tree_presorted(
    x: &[Vec<f64>],
    y: &[bool],
    w: &[f64],
    params: &CartParams,
    rng: Option<&mut ChaCha8Rng>,
    presorted: &Presorted,
) -> Result<Tree> {
    check_inputs(x, y.len(), w.len())?;
    let root = presorted.filter(|i| w[i] > 0.0);
    if root.members().is_empty() && x[0].is_empty() {
        return Ok(Tree::leaf(0.0));
    }
    if root.members().is_empty() {
        return Err(Error::Empty("all sample weights are zero"));
    }
    let mut cart = Cart {
        x,
        y,
        w,
        params: *params,
        n_features: x[0].len(),
        rng,
        nodes: Vec::new(),
        goes_left: vec![false; x.len()],
    };
    cart.build(root, 0);
    Ok(Tree { nodes: cart.nodes })
}
