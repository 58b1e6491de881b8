//! Built-in probabilistic classifiers, their joint search space, and the
//! problems the optimizer runs against: real datasets and a synthetic
//! black-box family.

mod gnb;
mod knn;
mod logreg;
mod synthetic;
mod tree;

use serde_json::json;

use crate::configspace::{ConfigSpace, Configuration, HyperparameterDef};
use crate::ensembles::{classification_error, PredictionMatrix};
use crate::error::{validation, Error, Result};
use crate::optimizer::{Evaluation, Problem};
use crate::treereg::FeatureMatrix;

pub use synthetic::{SyntheticParams, SyntheticProblem};

/// The joint space over the five built-in learners.
pub fn builtin_space() -> ConfigSpace {
    use HyperparameterDef as H;
    ConfigSpace::new(vec![
        H::categorical("algorithm", &["knn", "dtree", "gnb", "logreg", "rf"]),
        H::integer("knn:k", 1, 50).when("algorithm", "knn"),
        H::categorical("knn:weights", &["uniform", "distance"]).when("algorithm", "knn"),
        H::integer("dtree:max_depth", 1, 20).when("algorithm", "dtree"),
        H::integer("dtree:min_samples_split", 2, 20).when("algorithm", "dtree"),
        H::categorical("dtree:criterion", &["gini", "entropy"]).when("algorithm", "dtree"),
        H::continuous("gnb:var_smoothing", 1e-10, 1e-1, true).when("algorithm", "gnb"),
        H::continuous("logreg:learning_rate", 1e-4, 1.0, true).when("algorithm", "logreg"),
        H::continuous("logreg:l2", 1e-8, 10.0, true).when("algorithm", "logreg"),
        H::integer("logreg:epochs", 10, 200).when("algorithm", "logreg"),
        H::integer("rf:n_trees", 5, 50).when("algorithm", "rf"),
        H::integer("rf:max_depth", 2, 20).when("algorithm", "rf"),
        H::continuous("rf:feature_fraction", 0.3, 1.0, false).when("algorithm", "rf"),
    ])
    .expect("built-in space is valid")
}

/// Feature rows with class labels.
#[derive(Debug, Clone)]
pub struct LabeledData {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
}

impl LabeledData {
    pub fn new(features: FeatureMatrix, labels: Vec<usize>) -> Result<Self> {
        if features.n_rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} labels",
                features.n_rows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A trained built-in classifier.
#[derive(Debug, Clone)]
pub enum Model {
    /// Training data held a single class.
    Constant { class: usize, n_classes: usize },
    Knn(knn::Knn),
    Tree(tree::ClassificationTree),
    Gnb(gnb::GaussianNb),
    LogReg(logreg::LogisticRegression),
    Forest(tree::Forest),
}

fn int(config: &Configuration, name: &str) -> Result<usize> {
    config
        .get_i64(name)
        .filter(|&v| v >= 0)
        .map(|v| v as usize)
        .ok_or_else(|| Error::InvalidConfig(format!("`{name}` missing or not a non-negative integer")))
}

fn float(config: &Configuration, name: &str) -> Result<f64> {
    config
        .get_f64(name)
        .ok_or_else(|| Error::InvalidConfig(format!("`{name}` missing or not a number")))
}

fn choice<'c>(config: &'c Configuration, name: &str) -> Result<&'c str> {
    config
        .get_str(name)
        .ok_or_else(|| Error::InvalidConfig(format!("`{name}` missing or not a choice")))
}

/// Trains the learner named by `config["algorithm"]`.
pub fn train(config: &Configuration, train: &LabeledData, n_classes: usize, seed: u64) -> Result<Model> {
    if train.is_empty() {
        return Err(validation("training data is empty"));
    }
    if let Some(&bad) = train.labels.iter().find(|&&l| l >= n_classes) {
        return Err(validation(format!("label {bad} out of range for {n_classes} classes")));
    }
    let first = train.labels[0];
    if train.labels.iter().all(|&l| l == first) {
        return Ok(Model::Constant {
            class: first,
            n_classes,
        });
    }
    let x = &train.features;
    let y = &train.labels;
    Ok(match choice(config, "algorithm")? {
        "knn" => Model::Knn(knn::Knn::fit(
            x,
            y,
            n_classes,
            int(config, "knn:k")?,
            choice(config, "knn:weights")? == "distance",
        )),
        "dtree" => {
            let criterion = tree::Criterion::parse(choice(config, "dtree:criterion")?)?;
            let params = tree::TreeParams {
                max_depth: int(config, "dtree:max_depth")?,
                min_samples_split: int(config, "dtree:min_samples_split")?,
                criterion,
                feature_fraction: 1.0,
            };
            Model::Tree(tree::ClassificationTree::fit(x, y, n_classes, &params, None, seed))
        }
        "gnb" => Model::Gnb(gnb::GaussianNb::fit(x, y, n_classes, float(config, "gnb:var_smoothing")?)),
        "logreg" => Model::LogReg(logreg::LogisticRegression::fit(
            x,
            y,
            n_classes,
            float(config, "logreg:learning_rate")?,
            float(config, "logreg:l2")?,
            int(config, "logreg:epochs")?,
        )),
        "rf" => {
            let params = tree::TreeParams {
                max_depth: int(config, "rf:max_depth")?,
                min_samples_split: 2,
                criterion: tree::Criterion::Gini,
                feature_fraction: float(config, "rf:feature_fraction")?,
            };
            Model::Forest(tree::Forest::fit(x, y, n_classes, int(config, "rf:n_trees")?, &params, seed))
        }
        other => return Err(Error::InvalidConfig(format!("unknown algorithm `{other}`"))),
    })
}

impl Model {
    pub fn predict(&self, x: &FeatureMatrix) -> Result<PredictionMatrix> {
        match self {
            Model::Constant { class, n_classes } => {
                PredictionMatrix::one_hot(&vec![*class; x.n_rows()], *n_classes)
            }
            Model::Knn(m) => m.predict(x),
            Model::Tree(m) => m.predict(x),
            Model::Gnb(m) => m.predict(x),
            Model::LogReg(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
        }
    }
}

/// Trains on `train`, predicts `val` and scores it.
pub fn train_and_predict(
    config: &Configuration,
    train_data: &LabeledData,
    val: &LabeledData,
    n_classes: usize,
    seed: u64,
) -> Result<(PredictionMatrix, f64)> {
    if train_data.features.n_cols() != val.features.n_cols() {
        return Err(Error::ShapeMismatch(format!(
            "train width {} vs validation width {}",
            train_data.features.n_cols(),
            val.features.n_cols()
        )));
    }
    let model = train(config, train_data, n_classes, seed)?;
    let preds = model.predict(&val.features)?;
    let err = classification_error(&preds, &val.labels)?;
    Ok((preds, err))
}

/// Normalizes rows into probabilities, mapping non-finite scores to zero.
fn normalize(n_classes: usize, scores: Vec<Vec<f64>>) -> Result<PredictionMatrix> {
    let rows = scores.into_iter().map(|r| {
        r.into_iter()
            .map(|v| if v.is_finite() { v } else { 0.0 })
            .collect::<Vec<f64>>()
    });
    PredictionMatrix::from_scores(n_classes, rows)
}

/// Softmax of log-scores, stable against overflow.
fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let n = logits.len() as f64;
        logits.iter_mut().for_each(|v| *v = 1.0 / n);
        return;
    }
    let mut total = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    logits.iter_mut().for_each(|v| *v /= total);
}

/// A dataset split into train, validation and test parts, with features
/// standardized by training-split statistics.
#[derive(Debug, Clone)]
pub struct DatasetProblem {
    name: String,
    space: ConfigSpace,
    n_classes: usize,
    train: LabeledData,
    val: LabeledData,
    test: LabeledData,
}

impl DatasetProblem {
    pub fn new(
        name: &str,
        n_classes: usize,
        train: LabeledData,
        val: LabeledData,
        test: LabeledData,
    ) -> Result<Self> {
        let width = train.features.n_cols();
        if val.features.n_cols() != width || test.features.n_cols() != width {
            return Err(Error::ShapeMismatch("splits have different feature widths".into()));
        }
        if train.is_empty() || val.is_empty() {
            return Err(validation("train and validation splits must be non-empty"));
        }
        let (mean, sd) = column_stats(&train.features);
        let scale = |d: LabeledData| -> Result<LabeledData> {
            let mut data = Vec::with_capacity(d.features.as_slice().len());
            for row in d.features.rows() {
                data.extend(row.iter().zip(&mean).zip(&sd).map(|((v, m), s)| (v - m) / s));
            }
            LabeledData::new(FeatureMatrix::new(d.features.n_rows(), width, data)?, d.labels)
        };
        Ok(Self {
            name: name.to_string(),
            space: builtin_space(),
            n_classes,
            train: scale(train)?,
            val: scale(val)?,
            test: scale(test)?,
        })
    }

    /// Replaces the search space with a user-supplied one. Every
    /// hyperparameter must be named as in the built-in space and every
    /// algorithm must be a built-in learner; bounds and choices may differ.
    pub fn with_space(mut self, space: ConfigSpace) -> Result<Self> {
        let builtin = builtin_space();
        if let Some(p) = space.params().iter().find(|p| builtin.param(&p.name).is_none()) {
            return Err(validation(format!("`{}` is not a built-in hyperparameter", p.name)));
        }
        if let Some(a) = space.algorithms().iter().find(|a| !builtin.algorithms().contains(a)) {
            return Err(validation(format!("`{a}` is not a built-in learner")));
        }
        self.space = space;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn train_data(&self) -> &LabeledData {
        &self.train
    }

    pub fn val_data(&self) -> &LabeledData {
        &self.val
    }

    pub fn test_data(&self) -> &LabeledData {
        &self.test
    }
}

/// Column means and standard deviations; constant columns get unit scale.
fn column_stats(x: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.n_rows() as f64;
    let mut mean = vec![0.0; x.n_cols()];
    for row in x.rows() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; x.n_cols()];
    for row in x.rows() {
        var.iter_mut()
            .zip(row.iter().zip(&mean))
            .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
    }
    let sd = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 { sd } else { 1.0 }
        })
        .collect();
    (mean, sd)
}

impl Problem for DatasetProblem {
    fn space(&self) -> &ConfigSpace {
        &self.space
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn val_labels(&self) -> &[usize] {
        &self.val.labels
    }

    fn test_labels(&self) -> Option<&[usize]> {
        (!self.test.is_empty()).then_some(self.test.labels.as_slice())
    }

    fn evaluate(&self, config: &Configuration, seed: u64) -> Result<Evaluation> {
        let model = train(config, &self.train, self.n_classes, seed)?;
        let val = model.predict(&self.val.features)?;
        let test = if self.test.is_empty() {
            None
        } else {
            Some(model.predict(&self.test.features)?)
        };
        Ok(Evaluation { val, test })
    }

    fn descriptor(&self) -> serde_json::Value {
        json!({
            "kind": "dataset",
            "name": self.name,
            "n_classes": self.n_classes,
            "n_features": self.train.features.n_cols(),
            "n_train": self.train.len(),
            "n_val": self.val.len(),
            "n_test": self.test.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::Value;
    use crate::rng;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn cfg(pairs: &[(&str, Value)]) -> Configuration {
        pairs
            .iter()
            .fold(Configuration::new(), |c, (k, v)| c.with(k, v.clone()))
    }

    fn s(v: &str) -> Value {
        Value::Str(v.into())
    }

    fn blobs(n: usize, gap: f64, seed: u64) -> LabeledData {
        let mut r = rng::seeded(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let l = i % 2;
            let c = if l == 0 { -gap } else { gap };
            let a: f64 = StandardNormal.sample(&mut r);
            let b: f64 = StandardNormal.sample(&mut r);
            rows.push([c + 0.5 * a, c + 0.5 * b]);
            labels.push(l);
        }
        LabeledData::new(FeatureMatrix::from_rows(&rows).unwrap(), labels).unwrap()
    }

    fn xor(n: usize, seed: u64) -> LabeledData {
        let mut r = rng::seeded(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let a: f64 = r.random_range(-1.0..1.0);
            let b: f64 = r.random_range(-1.0..1.0);
            rows.push([a, b]);
            labels.push(usize::from((a > 0.0) != (b > 0.0)));
        }
        LabeledData::new(FeatureMatrix::from_rows(&rows).unwrap(), labels).unwrap()
    }

    #[test]
    fn builtin_space_shape() {
        let space = builtin_space();
        assert_eq!(space.algorithms().len(), 5);
        assert_eq!(space.params().len(), 13);
        assert_eq!(space.dim(), 19);
        for c in space.sample_uniform(1000, 3) {
            space.validate(&c).unwrap();
        }
    }

    #[test]
    fn separable_logreg() {
        let train = blobs(300, 2.0, 1);
        let val = blobs(200, 2.0, 2);
        let c = cfg(&[
            ("algorithm", s("logreg")),
            ("logreg:learning_rate", Value::Float(0.5)),
            ("logreg:l2", Value::Float(1e-6)),
            ("logreg:epochs", Value::Int(200)),
        ]);
        let (_, err) = train_and_predict(&c, &train, &val, 2, 0).unwrap();
        assert!(err <= 0.05, "error {err}");
    }

    #[test]
    fn gnb_on_indistinguishable_classes() {
        let mut r = rng::seeded(4);
        let mut make = |n: usize| {
            let rows: Vec<[f64; 1]> = (0..n).map(|_| [StandardNormal.sample(&mut r)]).collect();
            let labels = (0..n).map(|i| i % 2).collect();
            LabeledData::new(FeatureMatrix::from_rows(&rows).unwrap(), labels).unwrap()
        };
        let (train, val) = (make(400), make(400));
        let c = cfg(&[("algorithm", s("gnb")), ("gnb:var_smoothing", Value::Float(1e-9))]);
        let (_, err) = train_and_predict(&c, &train, &val, 2, 0).unwrap();
        assert!((err - 0.5).abs() <= 0.1, "error {err}");
    }

    #[test]
    fn stump_cannot_fit_xor() {
        let (train, val) = (xor(400, 5), xor(400, 6));
        let c = cfg(&[
            ("algorithm", s("dtree")),
            ("dtree:max_depth", Value::Int(1)),
            ("dtree:min_samples_split", Value::Int(2)),
            ("dtree:criterion", s("gini")),
        ]);
        let (_, err) = train_and_predict(&c, &train, &val, 2, 0).unwrap();
        assert!(err >= 0.4, "error {err}");
        let deep = cfg(&[
            ("algorithm", s("dtree")),
            ("dtree:max_depth", Value::Int(6)),
            ("dtree:min_samples_split", Value::Int(2)),
            ("dtree:criterion", s("entropy")),
        ]);
        let (_, stump_fit) = train_and_predict(&c, &train, &train, 2, 0).unwrap();
        let (_, deep_fit) = train_and_predict(&deep, &train, &train, 2, 0).unwrap();
        assert!(deep_fit < stump_fit);
    }

    #[test]
    fn one_nn_memorizes() {
        let train = xor(200, 7);
        let c = cfg(&[("algorithm", s("knn")), ("knn:k", Value::Int(1)), ("knn:weights", s("uniform"))]);
        let (_, err) = train_and_predict(&c, &train, &train, 2, 0).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn knn_with_all_neighbors_predicts_class_prior() {
        let train = blobs(40, 1.0, 8);
        let val = blobs(10, 1.0, 9);
        let c = cfg(&[("algorithm", s("knn")), ("knn:k", Value::Int(40)), ("knn:weights", s("uniform"))]);
        let (p, _) = train_and_predict(&c, &train, &val, 2, 0).unwrap();
        for i in 0..p.n_samples() {
            assert_eq!(p.row(i), &[0.5, 0.5]);
        }
    }

    #[test]
    fn single_class_training_data() {
        let mut train = blobs(20, 1.0, 10);
        train.labels = vec![1; 20];
        let val = blobs(6, 1.0, 11);
        for alg in ["knn", "dtree", "gnb", "logreg", "rf"] {
            let space = builtin_space();
            let mut c = space.sample_uniform(50, 12).into_iter().find(|c| c.get_str("algorithm") == Some(alg)).unwrap();
            c.set("algorithm", s(alg));
            let (p, _) = train_and_predict(&c, &train, &val, 3, 0).unwrap();
            for i in 0..p.n_samples() {
                assert_eq!(p.row(i), &[0.0, 1.0, 0.0]);
            }
        }
    }

    #[test]
    fn overflowing_logreg_stays_finite() {
        let train = blobs(100, 3.0, 13);
        let c = cfg(&[
            ("algorithm", s("logreg")),
            ("logreg:learning_rate", Value::Float(1.0)),
            ("logreg:l2", Value::Float(10.0)),
            ("logreg:epochs", Value::Int(200)),
        ]);
        let (p, err) = train_and_predict(&c, &train, &train, 2, 0).unwrap();
        assert!(p.values().iter().all(|v| v.is_finite()));
        assert!((0.0..=1.0).contains(&err));
    }

    #[test]
    fn training_is_deterministic() {
        let train = xor(150, 14);
        let val = xor(50, 15);
        let space = builtin_space();
        for c in space.sample_uniform(25, 16) {
            let a = train_and_predict(&c, &train, &val, 2, 3).unwrap();
            let b = train_and_predict(&c, &train, &val, 2, 3).unwrap();
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }

    #[test]
    fn dataset_problem_standardizes_by_train_stats() {
        let p = DatasetProblem::new("blobs", 2, blobs(60, 1.0, 17), blobs(20, 1.0, 18), blobs(20, 1.0, 19)).unwrap();
        let (mean, sd) = column_stats(&p.train_data().features);
        for (m, s) in mean.iter().zip(&sd) {
            assert!(m.abs() < 1e-12);
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(p.val_labels().len(), 20);
        let c = builtin_space().sample_uniform(1, 20).pop().unwrap();
        let ev = p.evaluate(&c, 0).unwrap();
        assert_eq!(ev.test.unwrap().n_samples(), 20);
    }
}
