//! Regression trees shared by both surrogates.
//!
//! Split search is exact greedy variance reduction: every boundary between two
//! consecutive distinct feature values present in a node is a candidate. The
//! distinct values of each column are indexed once per fit so a node's
//! candidates are scanned by bucket instead of re-sorting rows. Ties between
//! equally good splits go to the lower feature index, then the lower
//! threshold.

mod boost;
pub(crate) mod forest;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

pub use boost::{BagParams, BoostParams, BoostedBag, BoostedRegressor};
pub use forest::{ForestParams, ProbabilisticForest};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        Ok(Self { n_rows, n_cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has width {}, expected {n_cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            data,
        })
    }

    pub fn with_capacity(n_cols: usize, rows: usize) -> Self {
        Self {
            n_rows: 0,
            n_cols,
            data: Vec::with_capacity(rows * n_cols),
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_cols, "row width");
        self.data.extend_from_slice(row);
        self.n_rows += 1;
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }
}

pub(crate) fn check_training_data(x: &FeatureMatrix, y: &[f64], min_rows: usize) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if y.len() < min_rows {
        return Err(validation(format!(
            "need at least {min_rows} training rows, got {}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(validation("targets contain NaN or infinite values"));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(validation("features contain NaN or infinite values"));
    }
    Ok(())
}

/// Column-wise index of the distinct values of a training matrix.
pub(crate) struct BinnedFeatures {
    columns: Vec<BinnedColumn>,
}

struct BinnedColumn {
    values: Vec<f64>,
    bins: Vec<u32>,
}

impl BinnedFeatures {
    pub(crate) fn new(x: &FeatureMatrix) -> Self {
        let columns = (0..x.n_cols())
            .map(|j| {
                let mut values: Vec<f64> = (0..x.n_rows()).map(|i| x.get(i, j)).collect();
                values.sort_by(f64::total_cmp);
                values.dedup();
                let bins = (0..x.n_rows())
                    .map(|i| {
                        let v = x.get(i, j);
                        values.partition_point(|&u| u < v) as u32
                    })
                    .collect();
                BinnedColumn { values, bins }
            })
            .collect();
        Self { columns }
    }

    fn max_bins(&self) -> usize {
        self.columns.iter().map(|c| c.values.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64, count: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// CART regression tree stored as a flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, count } => Some((value, count)),
            _ => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Multiplier applied to leaf means (the learning rate for boosting).
    pub leaf_scale: f64,
}

struct Candidate {
    feature: usize,
    last_left_bin: u32,
    threshold: f64,
    score: f64,
}

pub(crate) struct TreeBuilder<'a> {
    binned: &'a BinnedFeatures,
    targets: &'a [f64],
    features: &'a [usize],
    params: TreeParams,
    nodes: Vec<Node>,
    hist_sum: Vec<f64>,
    hist_count: Vec<u32>,
    scratch: Vec<(u32, f64)>,
    groups: Vec<(u32, f64, u32)>,
}

const MIN_GAIN: f64 = 1e-12;

impl<'a> TreeBuilder<'a> {
    /// `features` must be sorted ascending; it fixes the tie-break order.
    pub(crate) fn new(
        binned: &'a BinnedFeatures,
        targets: &'a [f64],
        features: &'a [usize],
        params: TreeParams,
    ) -> Self {
        let nb = binned.max_bins();
        Self {
            binned,
            targets,
            features,
            params,
            nodes: Vec::new(),
            hist_sum: vec![0.0; nb],
            hist_count: vec![0; nb],
            scratch: Vec::new(),
            groups: Vec::new(),
        }
    }

    pub(crate) fn build(mut self, rows: &mut [u32]) -> RegressionTree {
        self.grow(rows, 0);
        RegressionTree { nodes: self.nodes }
    }

    fn grow(&mut self, rows: &mut [u32], depth: usize) -> usize {
        let y = self.targets;
        let n = rows.len();
        let mut sum = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &r in rows.iter() {
            let v = y[r as usize];
            sum += v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let id = self.nodes.len();
        let mean = if lo == hi { lo } else { forest::shifted_mean(rows.iter().map(|&r| y[r as usize])) };
        let leaf = Node::Leaf {
            value: if n == 0 { 0.0 } else { mean * self.params.leaf_scale },
            count: n,
        };
        self.nodes.push(leaf);

        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || n < 2 * min_leaf || lo == hi {
            return id;
        }
        let Some(best) = self.best_split(rows, sum) else {
            return id;
        };
        if best.score - sum * sum / n as f64 <= MIN_GAIN {
            return id;
        }

        let bins = &self.binned.columns[best.feature].bins;
        let mut mid = 0;
        for k in 0..n {
            if bins[rows[k] as usize] <= best.last_left_bin {
                rows.swap(mid, k);
                mid += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(mid);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, rows: &[u32], total: f64) -> Option<Candidate> {
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<Candidate> = None;
        let mut groups = std::mem::take(&mut self.groups);
        for &f in self.features {
            let col = &self.binned.columns[f];
            let nb = col.values.len();
            if nb < 2 {
                continue;
            }
            // Per-bin (sum, count) in ascending bin order, accumulated in row
            // order either way so both paths produce identical sums.
            groups.clear();
            if n * 8 < nb {
                self.scratch.clear();
                self.scratch
                    .extend(rows.iter().map(|&r| (col.bins[r as usize], self.targets[r as usize])));
                self.scratch.sort_by_key(|&(b, _)| b);
                for &(b, v) in &self.scratch {
                    match groups.last_mut() {
                        Some(g) if g.0 == b => {
                            g.1 += v;
                            g.2 += 1;
                        }
                        _ => groups.push((b, v, 1)),
                    }
                }
            } else {
                self.hist_sum[..nb].fill(0.0);
                self.hist_count[..nb].fill(0);
                for &r in rows {
                    let b = col.bins[r as usize] as usize;
                    self.hist_sum[b] += self.targets[r as usize];
                    self.hist_count[b] += 1;
                }
                for b in 0..nb {
                    if self.hist_count[b] > 0 {
                        groups.push((b as u32, self.hist_sum[b], self.hist_count[b]));
                    }
                }
            }

            let mut left_sum = 0.0;
            let mut left_n = 0usize;
            for w in 0..groups.len().saturating_sub(1) {
                left_sum += groups[w].1;
                left_n += groups[w].2 as usize;
                let right_n = n - left_n;
                if right_n < min_leaf {
                    break;
                }
                if left_n < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let score =
                    left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let a = col.values[groups[w].0 as usize];
                    let b = col.values[groups[w + 1].0 as usize];
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Candidate {
                        feature: f,
                        last_left_bin: groups[w].0,
                        threshold,
                        score,
                    });
                }
            }
        }
        self.groups = groups;
        best
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    kind: String,
    format_version: u32,
    model: T,
}

const FORMAT_VERSION: u32 = 1;

/// Writes a model as versioned JSON.
pub fn save_model<T: Serialize>(model: &T, kind: &str, path: impl AsRef<Path>) -> Result<()> {
    let env = Envelope {
        kind: kind.to_string(),
        format_version: FORMAT_VERSION,
        model,
    };
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(file, &env)?;
    Ok(())
}

pub fn load_model<T: DeserializeOwned>(kind: &str, path: impl AsRef<Path>) -> Result<T> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let env: Envelope<T> = serde_json::from_reader(file)?;
    if env.kind != kind || env.format_version != FORMAT_VERSION {
        return Err(validation(format!(
            "expected {kind} v{FORMAT_VERSION}, found {} v{}",
            env.kind, env.format_version
        )));
    }
    Ok(env.model)
}
