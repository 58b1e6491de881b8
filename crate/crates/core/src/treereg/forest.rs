use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_training_data, BinnedFeatures, FeatureMatrix, RegressionTree, TreeBuilder, TreeParams};
use crate::error::{validation, Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    /// Fraction of features each tree may split on.
    pub feature_fraction: f64,
    pub min_samples_leaf: usize,
    pub max_depth: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 10,
            bootstrap: true,
            feature_fraction: 5.0 / 6.0,
            min_samples_leaf: 3,
            max_depth: 20,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(validation("forest needs at least one tree"));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(validation("feature_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Random forest whose predictive variance is the spread of its trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticForest {
    trees: Vec<RegressionTree>,
    n_features: usize,
}

pub(crate) fn feature_subset(rng: &mut rng::Rng, n_features: usize, fraction: f64) -> Vec<usize> {
    let k = ((fraction * n_features as f64).round() as usize).clamp(1, n_features.max(1));
    if k >= n_features {
        return (0..n_features).collect();
    }
    let mut picked = index::sample(rng, n_features, k).into_vec();
    picked.sort_unstable();
    picked
}

impl ProbabilisticForest {
    /// Fits `params.n_trees` trees. Tree `i` draws its bootstrap rows and
    /// feature subset from a stream keyed by `(seed, i)`.
    pub fn fit(x: &FeatureMatrix, y: &[f64], params: &ForestParams, seed: u64) -> Result<Self> {
        params.validate()?;
        check_training_data(x, y, 1)?;
        let n = x.n_rows();
        let binned = BinnedFeatures::new(x);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            leaf_scale: 1.0,
        };
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = rng::seeded(rng::derive(seed, &[t as u64]));
                let features = feature_subset(&mut rng, x.n_cols(), params.feature_fraction);
                let mut rows: Vec<u32> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n) as u32).collect()
                } else {
                    (0..n as u32).collect()
                };
                TreeBuilder::new(&binned, y, &features, tree_params).build(&mut rows)
            })
            .collect();
        Ok(Self {
            trees,
            n_features: x.n_cols(),
        })
    }

    /// Mean and population variance of the per-tree predictions.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.n_features {
            return Err(Error::ShapeMismatch(format!(
                "input width {} but forest was trained on {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(mean_var(self.trees.iter().map(|t| t.predict(x))))
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Mean and population variance. Shifted by the first value so constant
/// inputs give their value and zero exactly.
pub(crate) fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mean = shifted_mean(values.clone());
    let (n, ss) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + (v - mean) * (v - mean)));
    (mean, (ss / n as f64).max(0.0))
}

pub(crate) fn shifted_mean(mut values: impl Iterator<Item = f64>) -> f64 {
    let Some(first) = values.next() else {
        return f64::NAN;
    };
    let (n, dev) = values.fold((1usize, 0.0), |(n, s), v| (n + 1, s + (v - first)));
    first + dev / n as f64
}
