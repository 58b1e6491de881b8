use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::forest::{feature_subset, mean_var, shifted_mean};
use super::{check_training_data, BinnedFeatures, FeatureMatrix, RegressionTree, TreeBuilder, TreeParams};
use crate::error::{validation, Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of rows drawn without replacement each round.
    pub row_subsample: f64,
    /// Fraction of features available to each round's tree.
    pub feature_subsample: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 6,
            min_samples_leaf: 3,
            row_subsample: 0.8,
            feature_subsample: 0.8,
        }
    }
}

impl BoostParams {
    fn validate(&self) -> Result<()> {
        let frac = |v: f64| v > 0.0 && v <= 1.0;
        if !frac(self.row_subsample) || !frac(self.feature_subsample) {
            return Err(validation("subsample fractions must lie in (0, 1]"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(validation("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagParams {
    pub n_members: usize,
    pub boost: BoostParams,
}

impl Default for BagParams {
    fn default() -> Self {
        Self {
            n_members: 10,
            boost: BoostParams::default(),
        }
    }
}

/// Stage-wise squared-error gradient boosting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedRegressor {
    base: f64,
    trees: Vec<RegressionTree>,
    n_features: usize,
    /// Mean squared training error after each round, over all rows.
    train_loss: Vec<f64>,
}

impl BoostedRegressor {
    pub fn fit(x: &FeatureMatrix, y: &[f64], params: &BoostParams, seed: u64) -> Result<Self> {
        params.validate()?;
        check_training_data(x, y, 1)?;
        Ok(Self::fit_binned(x, &BinnedFeatures::new(x), y, params, seed))
    }

    fn fit_binned(
        x: &FeatureMatrix,
        binned: &BinnedFeatures,
        y: &[f64],
        params: &BoostParams,
        seed: u64,
    ) -> Self {
        let n = x.n_rows();
        let base = shifted_mean(y.iter().copied());
        let mut fitted = vec![base; n];
        let mut residual: Vec<f64> = y.iter().map(|v| v - base).collect();
        let n_sub = ((params.row_subsample * n as f64).round() as usize).clamp(1, n);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            leaf_scale: params.learning_rate,
        };

        let mut trees = Vec::with_capacity(params.n_rounds);
        let mut train_loss = Vec::with_capacity(params.n_rounds);
        for round in 0..params.n_rounds {
            let mut rng = rng::seeded(rng::derive(seed, &[round as u64]));
            let features = feature_subset(&mut rng, x.n_cols(), params.feature_subsample);
            let mut rows: Vec<u32> = if n_sub < n {
                let mut r: Vec<u32> = index::sample(&mut rng, n, n_sub)
                    .into_iter()
                    .map(|i| i as u32)
                    .collect();
                r.sort_unstable();
                r
            } else {
                (0..n as u32).collect()
            };
            let tree = TreeBuilder::new(binned, &residual, &features, tree_params).build(&mut rows);
            let mut sse = 0.0;
            for i in 0..n {
                fitted[i] += tree.predict(x.row(i));
                residual[i] = y[i] - fitted[i];
                sse += residual[i] * residual[i];
            }
            train_loss.push(sse / n as f64);
            trees.push(tree);
        }
        Self {
            base,
            trees,
            n_features: x.n_cols(),
            train_loss,
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Same values as `predict` row by row, looping over trees first.
    fn predict_rows(&self, x: &FeatureMatrix, out: &mut [f64]) {
        out.fill(0.0);
        for t in &self.trees {
            for (o, row) in out.iter_mut().zip(x.rows()) {
                *o += t.predict(row);
            }
        }
        out.iter_mut().for_each(|o| *o += self.base);
    }

    pub fn train_loss(&self) -> &[f64] {
        &self.train_loss
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }
}

/// Bag of boosted regressors; the spread of the members is the uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedBag {
    members: Vec<BoostedRegressor>,
    n_features: usize,
}

impl BoostedBag {
    /// Member `m` is trained with seed `derive(seed, m)`, so members differ
    /// only through their row and feature subsampling streams.
    pub fn fit(x: &FeatureMatrix, y: &[f64], params: &BagParams, seed: u64) -> Result<Self> {
        if params.n_members < 2 {
            return Err(validation("a bag needs at least two members"));
        }
        params.boost.validate()?;
        check_training_data(x, y, 2)?;
        let binned = BinnedFeatures::new(x);
        let members = (0..params.n_members)
            .map(|m| {
                BoostedRegressor::fit_binned(x, &binned, y, &params.boost, rng::derive(seed, &[m as u64]))
            })
            .collect();
        Ok(Self {
            members,
            n_features: x.n_cols(),
        })
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::ShapeMismatch(format!(
                "input width {} but bag was trained on {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Mean and population variance of the member predictions.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_width(x)?;
        Ok(mean_var(self.members.iter().map(|m| m.predict(x))))
    }

    /// `predict` for every row of `x`.
    pub fn predict_batch(&self, x: &FeatureMatrix) -> Result<Vec<(f64, f64)>> {
        if x.n_cols() != self.n_features {
            return Err(Error::ShapeMismatch(format!(
                "input width {} but bag was trained on {}",
                x.n_cols(),
                self.n_features
            )));
        }
        let n = x.n_rows();
        let mut by_member = vec![0.0; n * self.members.len()];
        for (m, chunk) in self.members.iter().zip(by_member.chunks_mut(n.max(1))) {
            m.predict_rows(x, chunk);
        }
        let k = self.members.len();
        Ok((0..n)
            .map(|i| mean_var((0..k).map(|m| by_member[m * n + i])))
            .collect())
    }

    /// `n` draws from `Normal(mean, variance)` at `x`.
    pub fn sample(&self, x: &[f64], n: usize, seed: u64) -> Result<Vec<f64>> {
        let (mean, var) = self.predict(x)?;
        Ok(sample_normal(mean, var, n, seed))
    }

    pub fn members(&self) -> &[BoostedRegressor] {
        &self.members
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Zero variance yields the mean exactly.
pub(crate) fn sample_normal(mean: f64, var: f64, n: usize, seed: u64) -> Vec<f64> {
    let sd = var.max(0.0).sqrt();
    let mut rng = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            mean + sd * z
        })
        .collect()
}
