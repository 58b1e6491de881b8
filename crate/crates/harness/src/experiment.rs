//! Benchmark orchestration and the surrogate-quality experiment.

use std::path::{Path, PathBuf};
use std::time::Instant;

use divbo_core::ensembles::{classification_error, diversity, mean_pool_disagreement};
use divbo_core::learners::{builtin_space, SyntheticParams, SyntheticProblem};
use divbo_core::optimizer::{mean_member_error, run, RunStatus};
use divbo_core::surrogates::{pairs_from_cache, DivSurrogate, DiversityCache, PerfSurrogate};
use divbo_core::treereg::{BagParams, FeatureMatrix, ForestParams};
use divbo_core::configspace::ConfigSpace;
use divbo_core::{rng, DivBoConfig, Method, PredictionMatrix, Problem, RunOutcome};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ingest_csv;
use crate::error::{HarnessError, Result};
use crate::report::ExperimentReport;
use crate::rundir::write_run_dir;
use crate::stats::kendall_tau;

/// Where a benchmark problem comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemSpec {
    Synthetic {
        name: String,
        params: SyntheticParams,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        space: Option<PathBuf>,
    },
    Csv {
        name: String,
        path: PathBuf,
        target: String,
        split_seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        space: Option<PathBuf>,
    },
}

impl ProblemSpec {
    /// `synthetic`, `synthetic:<seed>`, or a CSV path with a target column.
    pub fn parse(dataset: &str, target: Option<&str>, split_seed: u64) -> Result<Self> {
        if let Some(rest) = dataset.strip_prefix("synthetic") {
            let seed = match rest.strip_prefix(':') {
                Some(s) => s
                    .parse()
                    .map_err(|_| HarnessError::InvalidArgument(format!("bad synthetic seed `{s}`")))?,
                None if rest.is_empty() => 0,
                None => return Err(HarnessError::InvalidArgument(format!("unknown dataset `{dataset}`"))),
            };
            return Ok(ProblemSpec::Synthetic {
                name: dataset.to_string(),
                params: SyntheticParams {
                    seed,
                    ..SyntheticParams::default()
                },
                space: None,
            });
        }
        let target = target.ok_or_else(|| {
            HarnessError::InvalidArgument(format!("--target-col is required for `{dataset}`"))
        })?;
        let path = PathBuf::from(dataset);
        let name = path
            .file_stem()
            .map_or_else(|| dataset.to_string(), |s| s.to_string_lossy().into_owned());
        Ok(ProblemSpec::Csv {
            name,
            path,
            target: target.to_string(),
            split_seed,
            space: None,
        })
    }

    /// Searches the space defined in a TOML file instead of the built-in one.
    pub fn with_space(mut self, file: impl Into<PathBuf>) -> Self {
        match &mut self {
            ProblemSpec::Synthetic { space, .. } | ProblemSpec::Csv { space, .. } => *space = Some(file.into()),
        }
        self
    }

    pub fn name(&self) -> &str {
        match self {
            ProblemSpec::Synthetic { name, .. } | ProblemSpec::Csv { name, .. } => name,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Problem + Send>> {
        let load = |file: &Option<PathBuf>| -> Result<Option<ConfigSpace>> {
            file.as_ref().map(|f| ConfigSpace::from_file(f).map_err(Into::into)).transpose()
        };
        Ok(match self {
            ProblemSpec::Synthetic { params, space, .. } => Box::new(SyntheticProblem::new(
                load(space)?.unwrap_or_else(builtin_space),
                params.clone(),
            )),
            ProblemSpec::Csv {
                path,
                target,
                split_seed,
                space,
                ..
            } => {
                let problem = ingest_csv(path, target, *split_seed)?.problem()?;
                match load(space)? {
                    Some(s) => Box::new(problem.with_space(s)?),
                    None => Box::new(problem),
                }
            }
        })
    }
}

/// Raw per-(dataset, method, seed) results. Aggregates in the report are
/// computed from these rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub dataset: String,
    pub method: Method,
    pub seed: u64,
    /// Set when the cell failed; the metric fields are then empty.
    pub error: Option<String>,
    pub status: Option<RunStatus>,
    pub final_val_error: Option<f64>,
    pub final_test_error: Option<f64>,
    /// Best single-learner validation error after each iteration.
    pub best_val_trace: Vec<f64>,
    /// Temporary-pool ensemble validation error after each iteration.
    pub ensemble_val_trace: Vec<f64>,
    pub min_diversity_trace: Vec<Option<f64>>,
    /// Effective pool updates over the last third of the iterations.
    pub pool_updates: usize,
    pub mean_member_error: Option<f64>,
    pub pairwise_disagreement: Option<f64>,
}

impl RunRow {
    pub fn from_outcome(dataset: &str, seed: u64, outcome: &RunOutcome) -> Result<Self> {
        let records = &outcome.records;
        Ok(Self {
            dataset: dataset.to_string(),
            method: outcome.method,
            seed,
            error: None,
            status: Some(outcome.status),
            final_val_error: Some(outcome.val_error),
            final_test_error: outcome.test_error,
            best_val_trace: outcome.history.incumbent_trace(),
            ensemble_val_trace: records.iter().map(|r| r.ensemble_val_error).collect(),
            min_diversity_trace: records.iter().map(|r| r.min_diversity).collect(),
            pool_updates: divbo_core::optimizer::effective_pool_updates(records, records.len() / 3),
            mean_member_error: Some(mean_member_error(&outcome.history, &outcome.final_pool)?),
            pairwise_disagreement: Some(mean_pool_disagreement(&outcome.history, &outcome.final_pool)?),
        })
    }

    pub fn failed(dataset: &str, method: Method, seed: u64, message: String) -> Self {
        Self {
            dataset: dataset.to_string(),
            method,
            seed,
            error: Some(message),
            status: None,
            final_val_error: None,
            final_test_error: None,
            best_val_trace: Vec::new(),
            ensemble_val_trace: Vec::new(),
            min_diversity_trace: Vec::new(),
            pool_updates: 0,
            mean_member_error: None,
            pairwise_disagreement: None,
        }
    }

    /// The validation error of what the method would return at each
    /// iteration: the ensemble for ensemble methods, the incumbent otherwise.
    pub fn output_trace(&self) -> &[f64] {
        if self.method.builds_ensemble() {
            &self.ensemble_val_trace
        } else {
            &self.best_val_trace
        }
    }
}

/// Runs one cell and optionally writes its run directory.
pub fn run_cell(
    problem: &dyn Problem,
    dataset: &str,
    method: Method,
    cfg: &DivBoConfig,
    out: Option<&Path>,
) -> Result<(RunOutcome, RunRow)> {
    let started = Instant::now();
    let outcome = run(method, problem, cfg)?;
    if let Some(dir) = out {
        write_run_dir(dir, &outcome, cfg, problem.descriptor(), started.elapsed().as_secs_f64())?;
    }
    let row = RunRow::from_outcome(dataset, cfg.seed, &outcome)?;
    Ok((outcome, row))
}

pub fn cell_dir(root: &Path, dataset: &str, method: Method, seed: u64) -> PathBuf {
    root.join("runs").join(dataset).join(method.name()).join(format!("seed{seed}"))
}

/// Runs every (problem, method, seed) cell on `jobs` threads. A failing cell
/// becomes a row with its error message.
pub fn run_experiment(
    problems: &[ProblemSpec],
    methods: &[Method],
    seeds: &[u64],
    cfg: &DivBoConfig,
    out: Option<&Path>,
    jobs: usize,
) -> Result<ExperimentReport> {
    if problems.is_empty() || methods.is_empty() || seeds.is_empty() {
        return Err(HarnessError::InvalidArgument("need at least one dataset, method and seed".into()));
    }
    let built: Vec<(String, std::result::Result<Box<dyn Problem + Send>, String>)> = problems
        .iter()
        .map(|p| (p.name().to_string(), p.build().map_err(|e| e.to_string())))
        .collect();
    let cells: Vec<(usize, Method, u64)> = (0..built.len())
        .flat_map(|p| methods.iter().flat_map(move |&m| seeds.iter().map(move |&s| (p, m, s))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::InvalidArgument(format!("thread pool: {e}")))?;
    let rows: Vec<RunRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(p, method, seed)| {
                let (name, problem) = &built[p];
                let problem = match problem {
                    Ok(problem) => problem,
                    Err(e) => return RunRow::failed(name, method, seed, e.clone()),
                };
                let cfg = DivBoConfig { seed, ..cfg.clone() };
                let dir = out.map(|o| cell_dir(o, name, method, seed));
                match run_cell(problem.as_ref(), name, method, &cfg, dir.as_deref()) {
                    Ok((_, row)) => {
                        log::info!("{name} {method} seed {seed}: val {:?}", row.final_val_error);
                        row
                    }
                    Err(e) => {
                        log::warn!("{name} {method} seed {seed} failed: {e}");
                        RunRow::failed(name, method, seed, e.to_string())
                    }
                }
            })
            .collect()
    });
    let report = ExperimentReport::from_rows(rows, None);
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateEvalConfig {
    pub n_configs: usize,
    pub n_test: usize,
    pub checkpoints: Vec<usize>,
    pub forest: ForestParams,
    pub bag: BagParams,
    pub max_pairs: Option<usize>,
    pub seed: u64,
}

impl Default for SurrogateEvalConfig {
    fn default() -> Self {
        Self {
            n_configs: 300,
            n_test: 50,
            checkpoints: vec![50, 100, 150, 200, 250],
            forest: ForestParams::default(),
            bag: BagParams::default(),
            max_pairs: Some(5000),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Number of fitted configurations.
    pub k: usize,
    pub n_pairs: usize,
    pub diversity_tau: Option<f64>,
    pub performance_tau: Option<f64>,
}

/// Evaluates `n_configs` uniform configurations. The last `n_test` are held
/// out. At each checkpoint `k` both surrogates are fitted on the first `k`;
/// the diversity surrogate is scored on one pair per held-out configuration,
/// partnered with a seeded random fitted configuration, and the performance
/// surrogate on the held-out configurations themselves.
pub fn surrogate_eval(problem: &dyn Problem, cfg: &SurrogateEvalConfig) -> Result<Vec<Checkpoint>> {
    let n_fit = cfg.n_configs.checked_sub(cfg.n_test).filter(|&n| n >= 2).ok_or_else(|| {
        HarnessError::InvalidArgument("n_configs must exceed n_test by at least two".into())
    })?;
    if cfg.n_test < 2 {
        return Err(HarnessError::InvalidArgument("n_test must be at least 2".into()));
    }
    if let Some(&k) = cfg.checkpoints.iter().find(|&&k| k < 2 || k > n_fit) {
        return Err(HarnessError::InvalidArgument(format!("checkpoint {k} outside 2..={n_fit}")));
    }
    let space = problem.space();
    let configs = space.sample_uniform(cfg.n_configs, rng::derive(cfg.seed, &[1]));
    let mut encodings = Vec::with_capacity(configs.len());
    let mut preds: Vec<PredictionMatrix> = Vec::with_capacity(configs.len());
    let mut errors = Vec::with_capacity(configs.len());
    for (i, c) in configs.iter().enumerate() {
        encodings.push(space.encode(c)?);
        let ev = problem.evaluate(c, rng::derive(cfg.seed, &[2, i as u64]))?;
        errors.push(classification_error(&ev.val, problem.val_labels())?);
        preds.push(ev.val);
    }

    let mut cache = DiversityCache::new(None, 0);
    cache.update(&preds[..n_fit])?;
    let mut out = Vec::with_capacity(cfg.checkpoints.len());
    for &k in &cfg.checkpoints {
        let refs: Vec<&[f64]> = encodings[..k].iter().map(Vec::as_slice).collect();
        let fit_seed = rng::derive(cfg.seed, &[3, k as u64]);
        let cap = cfg.max_pairs.map(|m| (m, rng::derive(fit_seed, &[1])));
        let (x, y) = pairs_from_cache(&refs, &cache, cap)?;
        let div = DivSurrogate::fit_pairs(&x, &y, &cfg.bag, fit_seed)?;
        let perf = PerfSurrogate::fit_encoded(&FeatureMatrix::from_rows(&encodings[..k])?, &errors[..k], &cfg.forest, fit_seed)?;

        let mut partner = rng::seeded(rng::derive(cfg.seed, &[4, k as u64]));
        let (mut predicted, mut truth) = (Vec::new(), Vec::new());
        let (mut perf_pred, mut perf_truth) = (Vec::new(), Vec::new());
        for t in n_fit..cfg.n_configs {
            let j = partner.random_range(0..k);
            predicted.push(div.predict_pair(&encodings[t], &encodings[j])?.0);
            truth.push(diversity(&preds[t], &preds[j])?);
            perf_pred.push(perf.predict(&encodings[t])?.0);
            perf_truth.push(errors[t]);
        }
        out.push(Checkpoint {
            k,
            n_pairs: x.n_rows(),
            diversity_tau: kendall_tau(&predicted, &truth)?,
            performance_tau: kendall_tau(&perf_pred, &perf_truth)?,
        });
    }
    Ok(out)
}
