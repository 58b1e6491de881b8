//! Append-only record of evaluated configurations.

use serde::{Deserialize, Serialize};

use crate::configspace::Configuration;
use crate::ensembles::{PredictionMatrix, PredictionStore};

/// Error recorded for an evaluation that failed.
pub const PENALTY_ERROR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "message", rename_all = "lowercase")]
pub enum EvalStatus {
    Ok,
    Failed(String),
}

impl EvalStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, EvalStatus::Ok)
    }
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub config: Configuration,
    /// Surrogate encoding of `config`.
    pub encoded: Vec<f64>,
    /// Validation classification error, or the penalty for failures.
    pub error: f64,
    /// Class probabilities on the validation split.
    pub predictions: PredictionMatrix,
    /// Class probabilities on the held-out test split, when one exists.
    pub test_predictions: Option<PredictionMatrix>,
    /// Seconds spent training and predicting.
    pub wall_time: f64,
    pub status: EvalStatus,
}

#[derive(Debug, Clone, Default)]
pub struct RunHistory {
    observations: Vec<Observation>,
}

impl RunHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, obs: Observation) {
        self.observations.push(obs);
    }

    /// Number of observations, the iteration counter `t`.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Observation> {
        self.observations.get(i)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.observations.iter()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.error).collect()
    }

    /// Index of the lowest validation error, earliest on ties.
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, o) in self.observations.iter().enumerate() {
            if best.is_none_or(|b| o.error < self.observations[b].error) {
                best = Some(i);
            }
        }
        best
    }

    /// Best validation error seen after each observation.
    pub fn incumbent_trace(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.observations
            .iter()
            .map(|o| {
                best = best.min(o.error);
                best
            })
            .collect()
    }

    /// Whether an evaluated configuration has exactly this encoding.
    pub fn contains_encoding(&self, encoded: &[f64]) -> bool {
        self.observations.iter().any(|o| o.encoded == encoded)
    }
}

impl PredictionStore for RunHistory {
    fn len(&self) -> usize {
        self.observations.len()
    }

    fn prediction(&self, index: usize) -> &PredictionMatrix {
        &self.observations[index].predictions
    }
}

/// View of a history's test-split predictions.
pub struct TestPredictions<'a>(pub &'a RunHistory);

impl PredictionStore for TestPredictions<'_> {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn prediction(&self, index: usize) -> &PredictionMatrix {
        self.0.observations[index]
            .test_predictions
            .as_ref()
            .expect("observation has no test predictions")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::Value;

    fn obs(error: f64, label: usize) -> Observation {
        Observation {
            config: Configuration::new().with("algorithm", Value::Str("a".into())),
            encoded: vec![error],
            error,
            predictions: PredictionMatrix::one_hot(&[label], 2).unwrap(),
            test_predictions: None,
            wall_time: 0.0,
            status: EvalStatus::Ok,
        }
    }

    #[test]
    fn best_and_trace() {
        let mut h = RunHistory::new();
        assert_eq!(h.best(), None);
        for e in [0.4, 0.2, 0.3, 0.2] {
            h.push(obs(e, 0));
        }
        assert_eq!(h.len(), 4);
        assert_eq!(h.best(), Some(1));
        assert_eq!(h.incumbent_trace(), vec![0.4, 0.2, 0.2, 0.2]);
        assert!(h.contains_encoding(&[0.3]));
        assert!(!h.contains_encoding(&[0.5]));
    }

    #[test]
    fn status_serializes_with_tag() {
        let ok = serde_json::to_string(&EvalStatus::Ok).unwrap();
        assert_eq!(ok, r#"{"kind":"ok"}"#);
        let failed = EvalStatus::Failed("boom".into());
        let text = serde_json::to_string(&failed).unwrap();
        assert_eq!(serde_json::from_str::<EvalStatus>(&text).unwrap(), failed);
    }
}
