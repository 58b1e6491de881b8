//! Performance surrogate with expected improvement, and the pairwise
//! diversity surrogate with its sampled minimum-over-pool acquisition.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::ensembles::{self, PredictionStore};
use crate::error::{validation, Error, Result};
use crate::history::RunHistory;
use crate::rng;
use crate::treereg::forest::shifted_mean;
use crate::treereg::{BagParams, BoostedBag, FeatureMatrix, ForestParams, ProbabilisticForest};

/// Below this predictive standard deviation EI is the deterministic gain.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Expected improvement below `y_best` for a Gaussian prediction.
pub fn expected_improvement(mean: f64, sd: f64, y_best: f64) -> f64 {
    let gain = y_best - mean;
    if !(sd >= SIGMA_FLOOR) {
        return gain.max(0.0);
    }
    let z = gain / sd;
    let n = Normal::standard();
    (gain * n.cdf(z) + sd * n.pdf(z)).max(0.0)
}

#[derive(Debug, Clone)]
pub struct PerfSurrogate {
    forest: ProbabilisticForest,
    y_best: f64,
}

impl PerfSurrogate {
    /// Fits on every observation; failures already carry the penalty error.
    pub fn fit(history: &RunHistory, params: &ForestParams, seed: u64) -> Result<Self> {
        if history.is_empty() {
            return Err(validation("performance surrogate needs at least one observation"));
        }
        let rows: Vec<&[f64]> = history.iter().map(|o| o.encoded.as_slice()).collect();
        let x = FeatureMatrix::from_rows(&rows)?;
        Self::fit_encoded(&x, &history.errors(), params, seed)
    }

    pub fn fit_encoded(x: &FeatureMatrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<Self> {
        let forest = ProbabilisticForest::fit(x, y, params, seed)?;
        let y_best = y.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { forest, y_best })
    }

    pub fn y_best(&self) -> f64 {
        self.y_best
    }

    pub fn predict(&self, encoded: &[f64]) -> Result<(f64, f64)> {
        self.forest.predict(encoded)
    }

    pub fn expected_improvement(&self, encoded: &[f64]) -> Result<f64> {
        let (mean, var) = self.predict(encoded)?;
        Ok(expected_improvement(mean, var.sqrt(), self.y_best))
    }
}

/// Ground-truth pairwise diversities between observations, grown as the
/// history grows. Optionally restricted to a fixed random subset of
/// validation samples.
#[derive(Debug, Clone, Default)]
pub struct DiversityCache {
    rows: Option<Vec<usize>>,
    sample_cap: Option<usize>,
    seed: u64,
    /// `lower[i][j]` for `j < i`.
    lower: Vec<Vec<f64>>,
}

impl DiversityCache {
    /// `sample_cap` keeps the first `k` samples of a seeded shuffle.
    pub fn new(sample_cap: Option<usize>, seed: u64) -> Self {
        Self {
            rows: None,
            sample_cap,
            seed,
            lower: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Computes diversities for observations not yet seen.
    pub fn update<S: PredictionStore + ?Sized>(&mut self, store: &S) -> Result<()> {
        if store.is_empty() {
            return Ok(());
        }
        let first = store.prediction(0);
        if self.rows.is_none() {
            if let Some(cap) = self.sample_cap.filter(|&c| c < first.n_samples()) {
                let mut idx: Vec<usize> = (0..first.n_samples()).collect();
                idx.shuffle(&mut rng::seeded(self.seed));
                idx.truncate(cap);
                self.rows = Some(idx);
            }
        }
        for i in self.lower.len()..store.len() {
            let pi = store.prediction(i);
            if pi.n_samples() != first.n_samples() || pi.n_classes() != first.n_classes() {
                return Err(Error::ShapeMismatch(format!(
                    "observation {i} predictions are {}x{}, expected {}x{}",
                    pi.n_samples(),
                    pi.n_classes(),
                    first.n_samples(),
                    first.n_classes()
                )));
            }
            let row = (0..i)
                .map(|j| ensembles::diversity_on(pi, store.prediction(j), self.rows.as_deref()))
                .collect();
            self.lower.push(row);
        }
        Ok(())
    }

    /// Symmetric lookup with zero on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Greater => self.lower[i][j],
            std::cmp::Ordering::Less => self.lower[j][i],
        }
    }
}

/// Concatenated pair encoding `[a || b]`.
pub fn pair_encoding(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// All ordered pairs `(i, j)`, self-pairs included, `i`-major.
pub fn build_pair_training_set(history: &RunHistory) -> Result<(FeatureMatrix, Vec<f64>)> {
    let mut cache = DiversityCache::new(None, 0);
    cache.update(history)?;
    let encodings: Vec<&[f64]> = history.iter().map(|o| o.encoded.as_slice()).collect();
    pairs_from_cache(&encodings, &cache, None)
}

/// Builds the pair set from cached diversities. With `max_pairs`, a seeded
/// subset of unordered pairs is kept; both orderings of each kept pair and
/// every self-pair are always present.
pub fn pairs_from_cache(
    encodings: &[&[f64]],
    cache: &DiversityCache,
    max_pairs: Option<(usize, u64)>,
) -> Result<(FeatureMatrix, Vec<f64>)> {
    let n = encodings.len();
    if cache.len() < n {
        return Err(validation("diversity cache is behind the history"));
    }
    let width = encodings.first().map_or(0, |e| e.len());
    let mut keep: Option<Vec<bool>> = None;
    if let Some((cap, seed)) = max_pairs {
        let unordered = n * n.saturating_sub(1) / 2;
        let budget = cap.saturating_sub(n) / 2;
        if budget < unordered {
            let mut flags = vec![false; unordered];
            let mut idx: Vec<usize> = (0..unordered).collect();
            idx.shuffle(&mut rng::seeded(seed));
            for &k in &idx[..budget] {
                flags[k] = true;
            }
            keep = Some(flags);
        }
    }
    let tri = |i: usize, j: usize| {
        let (a, b) = if i > j { (i, j) } else { (j, i) };
        a * (a - 1) / 2 + b
    };
    let mut x = FeatureMatrix::with_capacity(2 * width, n * n);
    let mut y = Vec::with_capacity(n * n);
    let mut buf = vec![0.0; 2 * width];
    for i in 0..n {
        for j in 0..n {
            if i != j && keep.as_ref().is_some_and(|k| !k[tri(i, j)]) {
                continue;
            }
            buf[..width].copy_from_slice(encodings[i]);
            buf[width..].copy_from_slice(encodings[j]);
            x.push_row(&buf);
            y.push(cache.get(i, j));
        }
    }
    Ok((x, y))
}

/// Pair rows scored per batch in `acquisition_batch`.
const BATCH_ROWS: usize = 2048;

/// Average over `n_samples` draws of the minimum of independent Gaussians
/// given as `(mean, sd)`. Draw `n` takes one value per member.
pub fn sampled_min(moments: &[(f64, f64)], n_samples: usize, seed: u64) -> f64 {
    let mut rng = rng::seeded(seed);
    let draws = (0..n_samples).map(|_| {
        let mut min = f64::INFINITY;
        for &(mean, sd) in moments {
            let z: f64 = StandardNormal.sample(&mut rng);
            min = min.min(mean + sd * z);
        }
        min
    });
    shifted_mean(draws)
}

#[derive(Debug, Clone)]
pub struct DivSurrogate {
    bag: BoostedBag,
    width: usize,
}

impl DivSurrogate {
    pub fn fit(history: &RunHistory, params: &BagParams, seed: u64) -> Result<Self> {
        if history.len() < 2 {
            return Err(validation("diversity surrogate needs at least two observations"));
        }
        let (x, y) = build_pair_training_set(history)?;
        Self::fit_pairs(&x, &y, params, seed)
    }

    pub fn fit_pairs(x: &FeatureMatrix, y: &[f64], params: &BagParams, seed: u64) -> Result<Self> {
        if x.n_cols() % 2 != 0 {
            return Err(Error::ShapeMismatch(format!("pair width {} is odd", x.n_cols())));
        }
        let bag = BoostedBag::fit(x, y, params, seed)?;
        Ok(Self {
            bag,
            width: x.n_cols() / 2,
        })
    }

    /// Mean and variance of the predicted diversity of `(a, b)`.
    pub fn predict_pair(&self, a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
        self.bag.predict(&pair_encoding(a, b))
    }

    /// Average over `n_samples` draws of the minimum sampled diversity
    /// between `candidate` and the pool members. Duplicate members are
    /// scored once.
    pub fn acquisition(&self, members: &[&[f64]], candidate: &[f64], n_samples: usize, seed: u64) -> Result<f64> {
        Ok(self.acquisition_batch(members, &[candidate], n_samples, &[seed])?[0])
    }

    /// `acquisition` for each candidate with its own seed.
    pub fn acquisition_batch(
        &self,
        members: &[&[f64]],
        candidates: &[&[f64]],
        n_samples: usize,
        seeds: &[u64],
    ) -> Result<Vec<f64>> {
        if members.is_empty() {
            return Err(Error::EmptyPool);
        }
        if n_samples == 0 {
            return Err(validation("n_samples must be at least 1"));
        }
        if seeds.len() != candidates.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} seeds for {} candidates",
                seeds.len(),
                candidates.len()
            )));
        }
        for c in candidates.iter().chain(members) {
            if c.len() != self.width {
                return Err(Error::ShapeMismatch(format!(
                    "encoding width {} but surrogate expects {}",
                    c.len(),
                    self.width
                )));
            }
        }
        let mut unique: Vec<&[f64]> = Vec::with_capacity(members.len());
        for m in members {
            if !unique.contains(m) {
                unique.push(m);
            }
        }
        let k = unique.len();
        let chunk = (BATCH_ROWS / k).max(1);
        let mut out = Vec::with_capacity(candidates.len());
        for (cands, seeds) in candidates.chunks(chunk).zip(seeds.chunks(chunk)) {
            let mut x = FeatureMatrix::with_capacity(2 * self.width, cands.len() * k);
            let mut buf = vec![0.0; 2 * self.width];
            for c in cands {
                buf[self.width..].copy_from_slice(c);
                for m in &unique {
                    buf[..self.width].copy_from_slice(m);
                    x.push_row(&buf);
                }
            }
            let moments: Vec<(f64, f64)> = self
                .bag
                .predict_batch(&x)?
                .into_iter()
                .map(|(mean, var)| (mean, var.max(0.0).sqrt()))
                .collect();
            for (m, &seed) in moments.chunks(k).zip(seeds) {
                out.push(sampled_min(m, n_samples, seed));
            }
        }
        Ok(out)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bag(&self) -> &BoostedBag {
        &self.bag
    }
}
