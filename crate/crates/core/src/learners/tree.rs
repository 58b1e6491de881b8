use rand::seq::index;
use rand::Rng as _;

use crate::ensembles::PredictionMatrix;
use crate::error::{Error, Result};
use crate::rng;
use crate::treereg::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gini" => Ok(Criterion::Gini),
            "entropy" => Ok(Criterion::Entropy),
            other => Err(Error::InvalidConfig(format!("unknown criterion `{other}`"))),
        }
    }

    fn impurity(self, counts: &[f64], total: f64) -> f64 {
        match self {
            Criterion::Gini => 1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>(),
            Criterion::Entropy => -counts
                .iter()
                .filter(|&&c| c > 0.0)
                .map(|c| (c / total) * (c / total).log2())
                .sum::<f64>(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub criterion: Criterion,
    /// Fraction of features considered at each split.
    pub feature_fraction: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART classifier with Laplace-smoothed leaf class frequencies.
#[derive(Debug, Clone)]
pub struct ClassificationTree {
    nodes: Vec<Node>,
    n_classes: usize,
}

/// Row indices sorted by each feature, ties by row index.
fn presort(x: &FeatureMatrix) -> Vec<Vec<u32>> {
    (0..x.n_cols())
        .map(|f| {
            let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
            idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)).then(a.cmp(&b)));
            idx
        })
        .collect()
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [usize],
    weight: &'a [u32],
    n_classes: usize,
    params: TreeParams,
    rng: rng::Rng,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    buf: Vec<u32>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, lo: usize, hi: usize) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &r in &self.order[0][lo..hi] {
            counts[self.y[r as usize]] += self.weight[r as usize] as f64;
        }
        counts
    }

    fn leaf(&mut self, counts: &[f64]) -> usize {
        let total: f64 = counts.iter().sum();
        let k = self.n_classes as f64;
        let probs = counts.iter().map(|c| (c + 1.0) / (total + k)).collect();
        self.nodes.push(Node::Leaf(probs));
        self.nodes.len() - 1
    }

    fn features(&mut self) -> Vec<usize> {
        let d = self.x.n_cols();
        let k = ((self.params.feature_fraction * d as f64).round() as usize).clamp(1, d);
        if k == d {
            return (0..d).collect();
        }
        let mut f = index::sample(&mut self.rng, d, k).into_vec();
        f.sort_unstable();
        f
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let counts = self.counts(lo, hi);
        let total: f64 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        if pure || depth >= self.params.max_depth || total < self.params.min_samples_split as f64 {
            return self.leaf(&counts);
        }
        let parent = total * self.params.criterion.impurity(&counts, total);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut left = vec![0.0; self.n_classes];
        let mut right = vec![0.0; self.n_classes];
        for f in self.features() {
            left.iter_mut().for_each(|v| *v = 0.0);
            right.copy_from_slice(&counts);
            let mut n_left = 0.0;
            let rows = &self.order[f][lo..hi];
            for w in 0..rows.len() - 1 {
                let r = rows[w] as usize;
                let wt = self.weight[r] as f64;
                left[self.y[r]] += wt;
                right[self.y[r]] -= wt;
                n_left += wt;
                let (a, b) = (self.x.get(r, f), self.x.get(rows[w + 1] as usize, f));
                if a == b {
                    continue;
                }
                let n_right = total - n_left;
                let c = self.params.criterion;
                let score = n_left * c.impurity(&left, n_left) + n_right * c.impurity(&right, n_right);
                if best.is_none_or(|(s, _, _)| score < s) {
                    let mut thr = a + (b - a) / 2.0;
                    if thr >= b {
                        thr = a;
                    }
                    best = Some((score, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best.filter(|&(s, _, _)| parent - s > 1e-12) else {
            return self.leaf(&counts);
        };

        for &r in &self.order[feature][lo..hi] {
            self.goes_left[r as usize] = self.x.get(r as usize, feature) <= threshold;
        }
        let mut mid = lo;
        for f in 0..self.order.len() {
            self.buf.clear();
            let slice = &mut self.order[f][lo..hi];
            let mut k = 0;
            for i in 0..slice.len() {
                let r = slice[i];
                if self.goes_left[r as usize] {
                    slice[k] = r;
                    k += 1;
                } else {
                    self.buf.push(r);
                }
            }
            slice[k..].copy_from_slice(&self.buf);
            mid = lo + k;
        }

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(Vec::new()));
        let l = self.build(lo, mid, depth + 1);
        let r = self.build(mid, hi, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left: l,
            right: r,
        };
        id
    }
}

impl ClassificationTree {
    /// `weight` gives per-row multiplicities (bootstrap counts); rows with
    /// weight zero are left out.
    pub fn fit(
        x: &FeatureMatrix,
        y: &[usize],
        n_classes: usize,
        params: &TreeParams,
        weight: Option<&[u32]>,
        seed: u64,
    ) -> Self {
        Self::fit_presorted(x, y, n_classes, params, weight, &presort(x), seed)
    }

    fn fit_presorted(
        x: &FeatureMatrix,
        y: &[usize],
        n_classes: usize,
        params: &TreeParams,
        weight: Option<&[u32]>,
        sorted: &[Vec<u32>],
        seed: u64,
    ) -> Self {
        let ones;
        let weight = match weight {
            Some(w) => w,
            None => {
                ones = vec![1u32; y.len()];
                &ones
            }
        };
        let order: Vec<Vec<u32>> = sorted
            .iter()
            .map(|o| o.iter().copied().filter(|&r| weight[r as usize] > 0).collect())
            .collect();
        let n = order.first().map_or(y.len(), |o| o.len());
        let mut b = Builder {
            x,
            y,
            weight,
            n_classes,
            params: *params,
            rng: rng::seeded(seed),
            order,
            goes_left: vec![false; y.len()],
            buf: Vec::new(),
            nodes: Vec::new(),
        };
        if x.n_cols() == 0 {
            let mut counts = vec![0.0; n_classes];
            for (&l, &w) in y.iter().zip(weight) {
                counts[l] += w as f64;
            }
            b.leaf(&counts);
        } else {
            b.build(0, n, 0);
        }
        Self {
            nodes: b.nodes,
            n_classes,
        }
    }

    fn leaf_probs(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(p) => return p,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, q: &FeatureMatrix) -> Result<PredictionMatrix> {
        let rows = q.rows().map(|r| self.leaf_probs(r).to_vec()).collect();
        super::normalize(self.n_classes, rows)
    }
}

/// Bootstrapped trees with per-split feature subsampling, probabilities
/// averaged.
#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<ClassificationTree>,
    n_classes: usize,
}

impl Forest {
    pub fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, n_trees: usize, params: &TreeParams, seed: u64) -> Self {
        let sorted = presort(x);
        let n = y.len();
        let trees = (0..n_trees.max(1))
            .map(|t| {
                let mut r = rng::seeded(rng::derive(seed, &[t as u64]));
                let mut weight = vec![0u32; n];
                for _ in 0..n {
                    weight[r.random_range(0..n)] += 1;
                }
                let tree_seed = r.random();
                ClassificationTree::fit_presorted(x, y, n_classes, params, Some(&weight), &sorted, tree_seed)
            })
            .collect();
        Self { trees, n_classes }
    }

    pub fn predict(&self, q: &FeatureMatrix) -> Result<PredictionMatrix> {
        let k = self.trees.len() as f64;
        let rows = q
            .rows()
            .map(|r| {
                let mut acc = vec![0.0; self.n_classes];
                for t in &self.trees {
                    acc.iter_mut().zip(t.leaf_probs(r)).for_each(|(a, p)| *a += p);
                }
                acc.iter_mut().for_each(|a| *a /= k);
                acc
            })
            .collect();
        super::normalize(self.n_classes, rows)
    }
}
