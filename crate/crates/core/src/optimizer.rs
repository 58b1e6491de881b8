//! The optimization loop, rank-combined acquisition and the baselines.
//!
//! Every random stream in a run is keyed by `(seed, iteration, purpose)`, so
//! methods that share a code path also share their draws. In particular,
//! the diversity-aware loop with `beta = 0` suggests exactly what plain BO
//! suggests.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::configspace::{ConfigSpace, Configuration};
use crate::ensembles::{
    classification_error, ensemble_predict, ensemble_selection, min_diversity_to_pool, EnsemblePool,
    PredictionMatrix,
};
use crate::error::{validation, Error, Result};
use crate::history::{EvalStatus, Observation, RunHistory, TestPredictions, PENALTY_ERROR};
use crate::rng;
use crate::surrogates::{pairs_from_cache, DivSurrogate, DiversityCache, PerfSurrogate};
use crate::treereg::{BagParams, ForestParams};

mod stream {
    pub const RANDOM: u64 = 1;
    pub const GLOBAL: u64 = 2;
    pub const LOCAL: u64 = 3;
    pub const DIV_ACQ: u64 = 4;
    pub const PERF_FIT: u64 = 5;
    pub const DIV_FIT: u64 = 6;
    pub const EVAL: u64 = 7;
    pub const FALLBACK: u64 = 8;
    pub const PAIRS: u64 = 9;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DivBoConfig {
    /// Total number of evaluations.
    pub budget: usize,
    pub init_random: usize,
    pub n_global_candidates: usize,
    pub n_local_candidates: usize,
    pub beta: f64,
    pub tau: f64,
    pub ensemble_size: usize,
    /// Draws per candidate in the diversity acquisition.
    pub n_div_samples: usize,
    pub seed: u64,
    pub forest: ForestParams,
    pub bag: BagParams,
    /// Cap on diversity-surrogate training rows; unordered pairs are
    /// subsampled symmetrically above it. `None` trains on every pair.
    pub max_pairs: Option<usize>,
    /// Compute pair diversities on a fixed subset of this many validation
    /// samples. `None` uses all of them.
    pub diversity_sample_cap: Option<usize>,
    /// Wall-clock limit in seconds; the run stops after the evaluation that
    /// crosses it.
    pub time_limit: Option<f64>,
}

impl Default for DivBoConfig {
    fn default() -> Self {
        Self {
            budget: 250,
            init_random: 5,
            n_global_candidates: 4950,
            n_local_candidates: 50,
            beta: 0.05,
            tau: 0.2,
            ensemble_size: 25,
            n_div_samples: 10,
            seed: 0,
            forest: ForestParams::default(),
            bag: BagParams::default(),
            max_pairs: None,
            diversity_sample_cap: None,
            time_limit: None,
        }
    }
}

impl DivBoConfig {
    /// Reduced diversity-surrogate settings for single-core desk runs:
    /// a 5 x 30 boosted bag of depth-4 trees, and at
    /// most 1000 diversity training pairs.
    pub fn desk() -> Self {
        Self {
            bag: BagParams {
                n_members: 5,
                boost: crate::treereg::BoostParams {
                    n_rounds: 30,
                    learning_rate: 0.2,
                    max_depth: 4,
                    ..Default::default()
                },
            },
            max_pairs: Some(1000),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a finite non-negative number");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if self.n_global_candidates == 0 || self.n_local_candidates == 0 {
            return bad("candidate counts must be at least 1");
        }
        if self.init_random < 2 {
            return bad("init_random must be at least 2");
        }
        if self.budget < self.init_random {
            return bad("budget must be at least init_random");
        }
        if self.ensemble_size == 0 || self.n_div_samples == 0 {
            return bad("ensemble_size and n_div_samples must be at least 1");
        }
        if self.bag.n_members < 2 {
            return bad("the diversity surrogate needs at least two members");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "RS")]
    Rs,
    #[serde(rename = "BO")]
    Bo,
    #[serde(rename = "DivBO-")]
    DivBoMinus,
    #[serde(rename = "RS-ES")]
    RsEs,
    #[serde(rename = "BO-ES")]
    BoEs,
    #[serde(rename = "DivBO")]
    DivBo,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Rs,
        Method::Bo,
        Method::DivBoMinus,
        Method::RsEs,
        Method::BoEs,
        Method::DivBo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rs => "RS",
            Method::Bo => "BO",
            Method::DivBoMinus => "DivBO-",
            Method::RsEs => "RS-ES",
            Method::BoEs => "BO-ES",
            Method::DivBo => "DivBO",
        }
    }

    pub fn uses_surrogates(self) -> bool {
        !matches!(self, Method::Rs | Method::RsEs)
    }

    pub fn uses_diversity(self) -> bool {
        matches!(self, Method::DivBo | Method::DivBoMinus)
    }

    /// Whether the result is a post-hoc ensemble rather than the best
    /// single learner.
    pub fn builds_ensemble(self) -> bool {
        matches!(self, Method::RsEs | Method::BoEs | Method::DivBo)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| validation(format!("unknown method {s:?}")))
    }
}

/// Class probabilities produced by one evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub val: PredictionMatrix,
    pub test: Option<PredictionMatrix>,
}

/// A black-box classification problem over a search space.
pub trait Problem: Sync {
    fn space(&self) -> &ConfigSpace;
    fn n_classes(&self) -> usize;
    fn val_labels(&self) -> &[usize];
    fn test_labels(&self) -> Option<&[usize]>;
    /// Trains the configured learner and predicts the validation (and test)
    /// split. Errors are recorded as failed evaluations.
    fn evaluate(&self, config: &Configuration, seed: u64) -> Result<Evaluation>;
    /// Structured description for run metadata.
    fn descriptor(&self) -> serde_json::Value;
}

/// `beta * (sigmoid(tau * t) - 0.5)`.
pub fn weight_schedule(t: usize, beta: f64, tau: f64) -> f64 {
    let s = 1.0 / (1.0 + (-tau * t as f64).exp());
    beta * (s - 0.5)
}

/// Competition ranks with rank 1 for the largest value.
pub fn rank_values(values: &[f64]) -> Result<Vec<usize>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(validation("cannot rank NaN"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = if pos > 0 && values[order[pos - 1]] == values[i] {
            ranks[order[pos - 1]]
        } else {
            pos + 1
        };
    }
    Ok(ranks)
}

/// `R_perf + w * R_div` per candidate.
pub fn combined_acquisition(r_perf: &[usize], r_div: &[usize], w: f64) -> Result<Vec<f64>> {
    if r_perf.len() != r_div.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} performance ranks vs {} diversity ranks",
            r_perf.len(),
            r_div.len()
        )));
    }
    Ok(r_perf.iter().zip(r_div).map(|(&p, &d)| p as f64 + w * d as f64).collect())
}

/// Index of the smallest value, lowest index on ties.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Random,
    Model,
    /// Every candidate had already been evaluated.
    Fallback,
}

/// Acquisition details for the chosen candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionTrace {
    pub n_candidates: usize,
    pub ei: f64,
    pub r_perf: usize,
    pub div_acq: Option<f64>,
    pub r_div: Option<usize>,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct Suggestion {
    pub config: Configuration,
    pub source: Source,
    pub w: f64,
    pub trace: Option<AcquisitionTrace>,
}

/// Surrogate-driven suggestion.
///
/// Candidates already evaluated (identical encoding) are dropped. EI and,
/// when a diversity surrogate is given, the diversity acquisition against the
/// pool are ranked and combined with weight `w = weight_schedule(t)`.
pub fn suggest(
    history: &RunHistory,
    space: &ConfigSpace,
    perf: &PerfSurrogate,
    div: Option<(&DivSurrogate, &EnsemblePool)>,
    cfg: &DivBoConfig,
) -> Result<Suggestion> {
    let t = history.len();
    let key = |s: u64| rng::derive(cfg.seed, &[t as u64, s]);
    let w = if div.is_some() {
        weight_schedule(t, cfg.beta, cfg.tau)
    } else {
        0.0
    };

    let anchors: Vec<(Configuration, f64)> = history.iter().map(|o| (o.config.clone(), o.error)).collect();
    let mut candidates = space.sample_uniform(cfg.n_global_candidates, key(stream::GLOBAL));
    candidates.extend(space.sample_local(&anchors, cfg.n_local_candidates, key(stream::LOCAL))?);

    let mut pool_encodings: Vec<&[f64]> = Vec::new();
    if let Some((_, pool)) = div {
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        for m in pool.unique() {
            let obs = history
                .get(m)
                .ok_or_else(|| validation(format!("pool member {m} is not an observation")))?;
            pool_encodings.push(&obs.encoded);
        }
    }

    let mut kept = Vec::with_capacity(candidates.len());
    let mut encodings = Vec::with_capacity(candidates.len());
    let mut seeds = Vec::with_capacity(candidates.len());
    let mut ei = Vec::with_capacity(candidates.len());
    let acq_base = key(stream::DIV_ACQ);
    for (idx, c) in candidates.into_iter().enumerate() {
        let enc = space.encode(&c)?;
        if history.contains_encoding(&enc) {
            continue;
        }
        ei.push(perf.expected_improvement(&enc)?);
        seeds.push(rng::derive(acq_base, &[idx as u64]));
        encodings.push(enc);
        kept.push(c);
    }
    let div_acq = match div {
        Some((surrogate, _)) if !kept.is_empty() => {
            let refs: Vec<&[f64]> = encodings.iter().map(Vec::as_slice).collect();
            surrogate.acquisition_batch(&pool_encodings, &refs, cfg.n_div_samples, &seeds)?
        }
        _ => Vec::new(),
    };

    if kept.is_empty() {
        let config = space
            .sample_uniform(1, key(stream::FALLBACK))
            .pop()
            .expect("one sample requested");
        return Ok(Suggestion {
            config,
            source: Source::Fallback,
            w,
            trace: None,
        });
    }

    let r_perf = rank_values(&ei)?;
    let (alpha, r_div) = if div.is_some() {
        let r_div = rank_values(&div_acq)?;
        (combined_acquisition(&r_perf, &r_div, w)?, Some(r_div))
    } else {
        (r_perf.iter().map(|&r| r as f64).collect(), None)
    };
    let chosen = argmin(&alpha).expect("candidates are non-empty");
    if w == 0.0 {
        assert_eq!(Some(chosen), argmax(&ei), "zero weight must reduce to the EI argmax");
    }
    let trace = AcquisitionTrace {
        n_candidates: kept.len(),
        ei: ei[chosen],
        r_perf: r_perf[chosen],
        div_acq: div_acq.get(chosen).copied(),
        r_div: r_div.as_ref().map(|r| r[chosen]),
        alpha: alpha[chosen],
    };
    Ok(Suggestion {
        config: kept.swap_remove(chosen),
        source: Source::Model,
        w,
        trace: Some(trace),
    })
}

/// One line of the run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub config: Configuration,
    pub error: f64,
    pub status: EvalStatus,
    pub source: Source,
    pub w: f64,
    /// Ground-truth diversity between this learner and the nearest member of
    /// the pool built before it was evaluated.
    pub min_diversity: Option<f64>,
    /// Temporary pool after adding this observation.
    pub pool: EnsemblePool,
    pub ensemble_val_error: f64,
    pub acquisition: Option<AcquisitionTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    /// The time limit ended the run early.
    Partial,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub method: Method,
    pub history: RunHistory,
    pub records: Vec<IterationRecord>,
    /// Post-hoc ensemble, or the best single learner for non-ensemble
    /// methods.
    pub final_pool: EnsemblePool,
    pub val_error: f64,
    pub test_error: Option<f64>,
    pub status: RunStatus,
}

fn evaluate(problem: &dyn Problem, config: Configuration, seed: u64) -> Result<Observation> {
    let space = problem.space();
    let encoded = space.encode(&config)?;
    let started = Instant::now();
    let result = problem.evaluate(&config, seed).and_then(|ev| {
        let error = classification_error(&ev.val, problem.val_labels())?;
        Ok((ev, error))
    });
    let wall_time = started.elapsed().as_secs_f64();
    let n_val = problem.val_labels().len();
    let n_classes = problem.n_classes();
    Ok(match result {
        Ok((ev, error)) => Observation {
            config,
            encoded,
            error,
            predictions: ev.val,
            test_predictions: ev.test,
            wall_time,
            status: EvalStatus::Ok,
        },
        Err(e) => {
            log::warn!("evaluation of {config} failed: {e}");
            Observation {
                config,
                encoded,
                error: PENALTY_ERROR,
                predictions: PredictionMatrix::uniform(n_val, n_classes),
                test_predictions: problem
                    .test_labels()
                    .map(|l| PredictionMatrix::uniform(l.len(), n_classes)),
                wall_time,
                status: EvalStatus::Failed(e.to_string()),
            }
        }
    })
}

/// Runs `method` for `cfg.budget` evaluations.
pub fn run(method: Method, problem: &dyn Problem, cfg: &DivBoConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let space = problem.space();
    let labels = problem.val_labels();
    let started = Instant::now();
    let mut history = RunHistory::new();
    let mut records: Vec<IterationRecord> = Vec::with_capacity(cfg.budget);
    let mut cache = DiversityCache::new(cfg.diversity_sample_cap, rng::derive(cfg.seed, &[stream::PAIRS]));
    let mut pool: Option<EnsemblePool> = None;
    let mut status = RunStatus::Complete;

    for t in 0..cfg.budget {
        let key = |s: u64| rng::derive(cfg.seed, &[t as u64, s]);
        let suggestion = if !method.uses_surrogates() || t < cfg.init_random {
            Suggestion {
                config: space
                    .sample_uniform(1, key(stream::RANDOM))
                    .pop()
                    .expect("one sample requested"),
                source: Source::Random,
                w: 0.0,
                trace: None,
            }
        } else {
            let perf = PerfSurrogate::fit(&history, &cfg.forest, key(stream::PERF_FIT))?;
            if method.uses_diversity() {
                let div = fit_diversity(&history, &cache, cfg, key(stream::DIV_FIT))?;
                let p = pool.as_ref().expect("pool exists after the first evaluation");
                suggest(&history, space, &perf, Some((&div, p)), cfg)?
            } else {
                suggest(&history, space, &perf, None, cfg)?
            }
        };

        let obs = evaluate(problem, suggestion.config, key(stream::EVAL))?;
        history.push(obs);
        let idx = history.len() - 1;
        if method.uses_diversity() {
            cache.update(&history)?;
        }
        let min_diversity = match &pool {
            Some(p) => Some(min_diversity_to_pool(&history, p, idx)?),
            None => None,
        };
        let new_pool = ensemble_selection(&history, labels, cfg.ensemble_size)?;
        let ensemble_val_error = classification_error(&ensemble_predict(&history, &new_pool)?, labels)?;
        let obs = &history.observations()[idx];
        records.push(IterationRecord {
            iteration: t,
            config: obs.config.clone(),
            error: obs.error,
            status: obs.status.clone(),
            source: suggestion.source,
            w: suggestion.w,
            min_diversity,
            pool: new_pool.clone(),
            ensemble_val_error,
            acquisition: suggestion.trace,
        });
        log::debug!(
            "{method} t={t} error={:.4} ensemble={ensemble_val_error:.4}",
            obs.error
        );
        pool = Some(new_pool);

        if cfg.time_limit.is_some_and(|limit| started.elapsed().as_secs_f64() > limit) && t + 1 < cfg.budget {
            status = RunStatus::Partial;
            break;
        }
    }

    let final_pool = if method.builds_ensemble() {
        pool.expect("budget is at least one")
    } else {
        EnsemblePool::new(vec![history.best().expect("history is non-empty")])
    };
    let val_error = classification_error(&ensemble_predict(&history, &final_pool)?, labels)?;
    let test_error = match problem.test_labels() {
        Some(test) if history.iter().all(|o| o.test_predictions.is_some()) => {
            let preds = ensemble_predict(&TestPredictions(&history), &final_pool)?;
            Some(classification_error(&preds, test)?)
        }
        _ => None,
    };
    Ok(RunOutcome {
        method,
        history,
        records,
        final_pool,
        val_error,
        test_error,
        status,
    })
}

fn fit_diversity(history: &RunHistory, cache: &DiversityCache, cfg: &DivBoConfig, seed: u64) -> Result<DivSurrogate> {
    let encodings: Vec<&[f64]> = history.iter().map(|o| o.encoded.as_slice()).collect();
    let cap = cfg.max_pairs.map(|m| (m, rng::derive(seed, &[stream::PAIRS])));
    let (x, y) = pairs_from_cache(&encodings, cache, cap)?;
    DivSurrogate::fit_pairs(&x, &y, &cfg.bag, seed)
}

/// Iterations in the trailing `window` whose pool changed as a multiset and
/// whose ensemble validation error strictly decreased.
pub fn effective_pool_updates(records: &[IterationRecord], window: usize) -> usize {
    let start = records.len().saturating_sub(window).max(1);
    (start..records.len())
        .filter(|&i| {
            let (prev, cur) = (&records[i - 1], &records[i]);
            !cur.pool.same_multiset(&prev.pool) && cur.ensemble_val_error < prev.ensemble_val_error
        })
        .count()
}

/// Mean validation error of the distinct learners in a pool.
pub fn mean_member_error(history: &RunHistory, pool: &EnsemblePool) -> Result<f64> {
    let unique = pool.unique();
    if unique.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut total = 0.0;
    for m in &unique {
        total += history
            .get(*m)
            .ok_or_else(|| validation(format!("pool member {m} is not an observation")))?
            .error;
    }
    Ok(total / unique.len() as f64)
}
