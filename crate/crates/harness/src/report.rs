//! Aggregation of raw run rows into summaries, ranks and verdicts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use divbo_core::Method;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiment::RunRow;
use crate::stats::{average_ranks, wilcoxon_signed_rank, Verdict, Wilcoxon};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub dataset: String,
    pub method: Method,
    pub n_runs: usize,
    pub n_failed: usize,
    pub val_error: Option<MeanStd>,
    pub test_error: Option<MeanStd>,
    pub mean_member_error: Option<MeanStd>,
    pub pool_updates: Option<MeanStd>,
    pub pairwise_disagreement: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPoint {
    pub iteration: usize,
    pub method: Method,
    /// Rank averaged over the datasets that reach this iteration.
    pub mean_rank: f64,
    pub n_datasets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub dataset: String,
    pub iteration: usize,
    pub method: Method,
    pub mean_error: f64,
    pub mean_min_diversity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub dataset: String,
    pub method: Method,
    pub baseline: Method,
    pub test: Wilcoxon,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub better: usize,
    pub same: usize,
    pub worse: usize,
    pub insufficient: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingCell {
    pub dataset: String,
    pub method: Method,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    pub ranks: Vec<RankPoint>,
    pub traces: Vec<TracePoint>,
    pub baseline: Option<Method>,
    pub verdicts: Vec<VerdictRow>,
    pub tallies: BTreeMap<Method, Tally>,
    pub missing: Vec<MissingCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<RunRow>,
    pub summary: Summary,
}

/// Per-iteration means over the runs long enough to reach each iteration.
fn mean_trace<'a>(traces: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut count: Vec<usize> = Vec::new();
    for t in traces {
        if t.len() > sum.len() {
            sum.resize(t.len(), 0.0);
            count.resize(t.len(), 0);
        }
        for (i, v) in t.iter().enumerate() {
            sum[i] += v;
            count[i] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

impl Summary {
    pub fn from_rows(rows: &[RunRow], baseline: Option<Method>) -> Self {
        let mut groups: BTreeMap<(String, Method), Vec<&RunRow>> = BTreeMap::new();
        let mut missing = Vec::new();
        for r in rows {
            groups.entry((r.dataset.clone(), r.method)).or_default().push(r);
            if let Some(e) = &r.error {
                missing.push(MissingCell {
                    dataset: r.dataset.clone(),
                    method: r.method,
                    seed: r.seed,
                    error: e.clone(),
                });
            }
        }

        let mut cells = Vec::new();
        let mut traces = Vec::new();
        let mut mean_outputs: BTreeMap<&str, BTreeMap<Method, Vec<f64>>> = BTreeMap::new();
        for ((dataset, method), group) in &groups {
            let ok: Vec<&RunRow> = group.iter().copied().filter(|r| r.error.is_none()).collect();
            let collect = |f: fn(&RunRow) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            cells.push(CellSummary {
                dataset: dataset.clone(),
                method: *method,
                n_runs: ok.len(),
                n_failed: group.len() - ok.len(),
                val_error: MeanStd::of(&collect(|r| r.final_val_error)),
                test_error: MeanStd::of(&collect(|r| r.final_test_error)),
                mean_member_error: MeanStd::of(&collect(|r| r.mean_member_error)),
                pool_updates: MeanStd::of(&collect(|r| Some(r.pool_updates as f64))),
                pairwise_disagreement: MeanStd::of(&collect(|r| r.pairwise_disagreement)),
            });

            let mean_error = mean_trace(ok.iter().map(|r| r.output_trace()));
            let diversity: Vec<Vec<f64>> = ok
                .iter()
                .map(|r| r.min_diversity_trace.iter().map(|d| d.unwrap_or(f64::NAN)).collect())
                .collect();
            for (i, &e) in mean_error.iter().enumerate() {
                let ds: Vec<f64> = diversity.iter().filter_map(|d| d.get(i).copied()).filter(|v| !v.is_nan()).collect();
                traces.push(TracePoint {
                    dataset: dataset.clone(),
                    iteration: i,
                    method: *method,
                    mean_error: e,
                    mean_min_diversity: (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64),
                });
            }
            if !mean_error.is_empty() {
                mean_outputs.entry(dataset.as_str()).or_default().insert(*method, mean_error);
            }
        }

        // Rank methods per dataset and iteration, then average over datasets.
        let mut rank_sum: BTreeMap<(usize, Method), (f64, usize)> = BTreeMap::new();
        for by_method in mean_outputs.values() {
            let methods: Vec<Method> = by_method.keys().copied().collect();
            let len = by_method.values().map(Vec::len).min().unwrap_or(0);
            for i in 0..len {
                let values: Vec<f64> = methods.iter().map(|m| by_method[m][i]).collect();
                for (m, r) in methods.iter().zip(average_ranks(&values)) {
                    let e = rank_sum.entry((i, *m)).or_insert((0.0, 0));
                    e.0 += r;
                    e.1 += 1;
                }
            }
        }
        let ranks = rank_sum
            .into_iter()
            .map(|((iteration, method), (s, n))| RankPoint {
                iteration,
                method,
                mean_rank: s / n as f64,
                n_datasets: n,
            })
            .collect();

        let mut verdicts = Vec::new();
        let mut tallies: BTreeMap<Method, Tally> = BTreeMap::new();
        if let Some(base) = baseline {
            let datasets: BTreeSet<&str> = groups.keys().map(|(d, _)| d.as_str()).collect();
            for dataset in datasets {
                let Some(base_rows) = groups.get(&(dataset.to_string(), base)) else {
                    continue;
                };
                let final_error = |r: &RunRow| r.final_test_error.or(r.final_val_error);
                let base_by_seed: BTreeMap<u64, f64> =
                    base_rows.iter().filter_map(|r| final_error(r).map(|e| (r.seed, e))).collect();
                for ((d, method), group) in &groups {
                    if d != dataset || *method == base {
                        continue;
                    }
                    let (mut a, mut b) = (Vec::new(), Vec::new());
                    for r in group {
                        if let (Some(e), Some(&be)) = (final_error(r), base_by_seed.get(&r.seed)) {
                            a.push(e);
                            b.push(be);
                        }
                    }
                    let test = wilcoxon_signed_rank(&a, &b).expect("paired vectors have equal length");
                    let tally = tallies.entry(*method).or_default();
                    match test.verdict() {
                        Some(Verdict::Better) => tally.better += 1,
                        Some(Verdict::Same) => tally.same += 1,
                        Some(Verdict::Worse) => tally.worse += 1,
                        None => tally.insufficient += 1,
                    }
                    verdicts.push(VerdictRow {
                        dataset: dataset.to_string(),
                        method: *method,
                        baseline: base,
                        test,
                    });
                }
            }
        }

        Self {
            cells,
            ranks,
            traces,
            baseline,
            verdicts,
            tallies,
            missing,
        }
    }
}

impl ExperimentReport {
    pub fn from_rows(rows: Vec<RunRow>, baseline: Option<Method>) -> Self {
        let summary = Summary::from_rows(&rows, baseline);
        Self { rows, summary }
    }

    /// Writes `report.json`, `ranks.csv` and `traces.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_vec_pretty(self)?)?;

        let mut ranks = csv::Writer::from_path(dir.join("ranks.csv"))?;
        ranks.write_record(["iteration", "method", "mean_rank", "n_datasets"])?;
        for p in &self.summary.ranks {
            ranks.write_record([
                p.iteration.to_string(),
                p.method.to_string(),
                p.mean_rank.to_string(),
                p.n_datasets.to_string(),
            ])?;
        }
        ranks.flush()?;

        let mut traces = csv::Writer::from_path(dir.join("traces.csv"))?;
        traces.write_record(["dataset", "iteration", "method", "mean_error", "mean_min_diversity"])?;
        for p in &self.summary.traces {
            traces.write_record([
                p.dataset.clone(),
                p.iteration.to_string(),
                p.method.to_string(),
                p.mean_error.to_string(),
                p.mean_min_diversity.map_or_else(String::new, |d| d.to_string()),
            ])?;
        }
        traces.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// Recomputes the summary from the stored rows.
    pub fn recompute(&self) -> Self {
        Self::from_rows(self.rows.clone(), self.summary.baseline)
    }
}
