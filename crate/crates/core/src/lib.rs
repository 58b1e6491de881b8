//! Diversity-aware Bayesian optimization for combined algorithm selection and
//! hyperparameter search (CASH) with post-hoc ensemble selection.
//!
//! The crate is organised bottom-up:
//!
//! - [`configspace`]: conditional mixed search spaces, encoding and sampling.
//! - [`treereg`]: CART regression trees, a probabilistic random forest and a
//!   bag of gradient-boosted regressors.
//! - [`ensembles`]: prediction matrices, the pairwise diversity function,
//!   greedy ensemble selection and diversity diagnostics.
//! - [`surrogates`]: the performance surrogate with expected improvement and
//!   the pairwise diversity surrogate with its acquisition.
//! - [`optimizer`]: the optimization loop, rank-combined acquisition and
//!   baselines.
//! - [`learners`]: built-in classifiers, their joint search space and a
//!   synthetic black-box problem family.

pub mod configspace;
pub mod ensembles;
pub mod error;
pub mod history;
pub mod learners;
pub mod optimizer;
pub mod rng;
pub mod surrogates;
pub mod treereg;

pub use configspace::{ConfigSpace, Configuration, Domain, HyperparameterDef, Value};
pub use ensembles::{EnsemblePool, PredictionMatrix};
pub use error::{Error, Result};
pub use history::{EvalStatus, Observation, RunHistory};
pub use optimizer::{DivBoConfig, Method, Problem, RunOutcome};
