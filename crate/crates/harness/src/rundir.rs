//! Run directory layout:
//!
//! ```text
//! <dir>/history.jsonl       one IterationRecord per line
//! <dir>/preds/<idx>.f32     validation predictions, with a .json shape sidecar
//! <dir>/preds/<idx>.test.f32
//! <dir>/result.json
//! <dir>/config.json
//! ```
//!
//! Everything except `timing.json` is a pure function of the flags, so a
//! repeated run reproduces the files byte for byte.

use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use divbo_core::optimizer::{effective_pool_updates, mean_member_error, IterationRecord, RunStatus};
use divbo_core::{DivBoConfig, EnsemblePool, Method, RunOutcome};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Method,
    pub status: RunStatus,
    pub n_evaluations: usize,
    pub final_pool: EnsemblePool,
    pub val_error: f64,
    pub test_error: Option<f64>,
    pub best_single_val_error: f64,
    pub mean_member_error: f64,
    pub effective_updates_last_third: usize,
}

impl RunResult {
    pub fn from_outcome(outcome: &RunOutcome) -> Result<Self> {
        let best = outcome.history.best().expect("history is non-empty");
        Ok(Self {
            method: outcome.method,
            status: outcome.status,
            n_evaluations: outcome.history.len(),
            final_pool: outcome.final_pool.clone(),
            val_error: outcome.val_error,
            test_error: outcome.test_error,
            best_single_val_error: outcome.history.observations()[best].error,
            mean_member_error: mean_member_error(&outcome.history, &outcome.final_pool)?,
            effective_updates_last_third: effective_pool_updates(&outcome.records, outcome.records.len() / 3),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub config: DivBoConfig,
    pub problem: serde_json::Value,
}

pub fn write_history(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<IterationRecord>> {
    let reader = std::io::BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Writes the full run directory and returns the summary stored in
/// `result.json`.
pub fn write_run_dir(
    dir: &Path,
    outcome: &RunOutcome,
    cfg: &DivBoConfig,
    problem: serde_json::Value,
    elapsed_secs: f64,
) -> Result<RunResult> {
    let preds = dir.join("preds");
    fs::create_dir_all(&preds)?;
    write_history(&dir.join("history.jsonl"), &outcome.records)?;
    for (i, obs) in outcome.history.iter().enumerate() {
        obs.predictions.write(preds.join(format!("{i}.f32")))?;
        if let Some(test) = &obs.test_predictions {
            test.write(preds.join(format!("{i}.test.f32")))?;
        }
    }
    let result = RunResult::from_outcome(outcome)?;
    fs::write(dir.join("result.json"), serde_json::to_vec_pretty(&result)?)?;
    let config = RunConfig {
        method: outcome.method,
        config: cfg.clone(),
        problem,
    };
    fs::write(dir.join("config.json"), serde_json::to_vec_pretty(&config)?)?;
    let wall: f64 = outcome.history.iter().map(|o| o.wall_time).sum();
    fs::write(
        dir.join("timing.json"),
        serde_json::to_vec_pretty(&serde_json::json!({
            "elapsed_secs": elapsed_secs,
            "evaluation_secs": wall,
        }))?,
    )?;
    Ok(result)
}
