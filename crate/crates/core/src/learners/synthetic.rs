//! A deterministic black-box classification problem over any search space.
//!
//! Each pseudo-sample `s` has a label `y_s` and a difficulty `d_s`. A
//! configuration with encoding `e` produces class logits
//!
//! ```text
//! z_{s,k}(e) = scale * ( [k == y_s] * (q(e) - d_s) + sum_j a_{s,k,j} * sin(w_j * e_j + phi_{s,k,j}) )
//! ```
//!
//! and probabilities `softmax(z_s)`. The quality
//!
//! ```text
//! q(e) = c_alg - sum_j kappa_j * (e_j - o_j)^2 + r * sum_j b_j * sin(v_j * e_j + psi_j)
//! ```
//!
//! runs over the active non-selector slots, with a per-algorithm offset
//! `c_alg`, optimum `o`, and a high-frequency ripple of size `r`. The sine terms give every
//! configuration its own smooth pattern of mistakes, so nearby
//! configurations err on similar samples while distant ones disagree.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::configspace::{ConfigSpace, Configuration, INACTIVE};
use crate::ensembles::PredictionMatrix;
use crate::error::Result;
use crate::optimizer::{Evaluation, Problem};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n_val: usize,
    pub n_test: usize,
    pub n_classes: usize,
    /// Standard deviation of sample difficulties.
    pub difficulty_sd: f64,
    /// Standard deviation of each logit's sine pattern.
    pub pattern_sd: f64,
    /// Range of sine frequencies.
    pub frequency: (f64, f64),
    /// Range of per-algorithm quality offsets.
    pub offset: (f64, f64),
    /// Typical bowl curvature per slot.
    pub curvature: f64,
    /// Size of the quality ripple.
    pub roughness: f64,
    /// Range of ripple frequencies.
    pub ripple_frequency: (f64, f64),
    pub scale: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n_val: 200,
            n_test: 200,
            n_classes: 2,
            difficulty_sd: 0.3,
            pattern_sd: 1.0,
            frequency: (1.0, 4.0),
            offset: (-0.5, 1.5),
            curvature: 1.0,
            roughness: 0.1,
            ripple_frequency: (8.0, 16.0),
            scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Split {
    labels: Vec<usize>,
    difficulty: Vec<f64>,
    /// `amp[(s * n_classes + k) * dim + j]`, likewise `phase`.
    amp: Vec<f64>,
    phase: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    space: ConfigSpace,
    params: SyntheticParams,
    frequency: Vec<f64>,
    kappa: Vec<f64>,
    optimum: Vec<f64>,
    /// `(b_j, v_j, psi_j)` per slot.
    ripple: Vec<(f64, f64, f64)>,
    /// Offset per algorithm choice.
    offset: Vec<f64>,
    /// Slots of the algorithm selector's one-hot block.
    selector_width: usize,
    val: Split,
    test: Split,
}

impl SyntheticProblem {
    pub fn new(space: ConfigSpace, params: SyntheticParams) -> Self {
        let dim = space.dim();
        let selector_width = space.algorithms().len();
        let mut r = rng::seeded(params.seed);
        let frequency = (0..dim)
            .map(|_| r.random_range(params.frequency.0..=params.frequency.1))
            .collect();
        let kappa = (0..dim)
            .map(|j| {
                if j < selector_width {
                    0.0
                } else {
                    params.curvature * r.random_range(0.5..1.5)
                }
            })
            .collect();
        let optimum = (0..dim).map(|_| r.random_range(0.15..0.85)).collect();
        let offset = (0..selector_width)
            .map(|_| r.random_range(params.offset.0..=params.offset.1))
            .collect();
        let ripple = (0..dim)
            .map(|_| {
                (
                    r.random_range(-1.0..=1.0),
                    r.random_range(params.ripple_frequency.0..=params.ripple_frequency.1),
                    r.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let val = Self::split(&params, dim, params.n_val, rng::derive(params.seed, &[1]));
        let test = Self::split(&params, dim, params.n_test, rng::derive(params.seed, &[2]));
        Self {
            space,
            params,
            frequency,
            kappa,
            optimum,
            ripple,
            offset,
            selector_width,
            val,
            test,
        }
    }

    fn split(params: &SyntheticParams, dim: usize, n: usize, seed: u64) -> Split {
        let mut r = rng::seeded(seed);
        let c = params.n_classes;
        let labels = (0..n).map(|_| r.random_range(0..c)).collect();
        let diff = Normal::new(0.0, params.difficulty_sd).expect("finite sd");
        let difficulty = (0..n).map(|_| diff.sample(&mut r)).collect();
        // Sum of `dim` terms a * sin(.) has variance dim * sd^2 / 2.
        let amp_sd = params.pattern_sd * (2.0 / dim as f64).sqrt();
        let mut amp = Vec::with_capacity(n * c * dim);
        let mut phase = Vec::with_capacity(n * c * dim);
        for _ in 0..n * c * dim {
            let z: f64 = StandardNormal.sample(&mut r);
            amp.push(amp_sd * z);
            phase.push(r.random_range(0.0..std::f64::consts::TAU));
        }
        Split {
            labels,
            difficulty,
            amp,
            phase,
        }
    }

    pub fn params(&self) -> &SyntheticParams {
        &self.params
    }

    fn quality(&self, e: &[f64]) -> f64 {
        let alg = e[..self.selector_width].iter().position(|&v| v == 1.0).unwrap_or(0);
        let mut q = self.offset[alg];
        for j in self.selector_width..e.len() {
            if e[j] != INACTIVE {
                let d = e[j] - self.optimum[j];
                let (b, v, psi) = self.ripple[j];
                q += self.params.roughness * b * (v * e[j] + psi).sin() - self.kappa[j] * d * d;
            }
        }
        q
    }

    fn predict(&self, split: &Split, e: &[f64]) -> Result<PredictionMatrix> {
        let c = self.params.n_classes;
        let dim = e.len();
        let q = self.quality(e);
        let n = split.labels.len();
        let mut rows = Vec::with_capacity(n);
        let mut z = vec![0.0; c];
        for s in 0..n {
            for (k, zk) in z.iter_mut().enumerate() {
                let base = (s * c + k) * dim;
                let mut v = 0.0;
                for j in 0..dim {
                    v += split.amp[base + j] * (self.frequency[j] * e[j] + split.phase[base + j]).sin();
                }
                if k == split.labels[s] {
                    v += q - split.difficulty[s];
                }
                *zk = self.params.scale * v;
            }
            let mut p = z.clone();
            super::softmax(&mut p);
            rows.push(p);
        }
        PredictionMatrix::from_scores(c, rows)
    }

    /// Validation-split predictions and error for an encoding.
    pub fn evaluate_encoded(&self, e: &[f64]) -> Result<(PredictionMatrix, f64)> {
        let p = self.predict(&self.val, e)?;
        let err = crate::ensembles::classification_error(&p, &self.val.labels)?;
        Ok((p, err))
    }

    /// Bound `L` with `diversity(eval(c1), eval(c2)) <= L * delta` when the
    /// two configurations differ by `delta` in one normalized numeric
    /// hyperparameter.
    ///
    /// Each logit moves by at most
    /// `scale * (2 kappa_j + r |b_j| v_j + max|a| w_j) delta`;
    /// softmax is 1/2-Lipschitz in the Euclidean norm, and the diversity
    /// carries a factor `sqrt(2)/2`.
    pub fn lipschitz_bound(&self) -> f64 {
        let c = self.params.n_classes as f64;
        let amp_max = self
            .val
            .amp
            .iter()
            .chain(&self.test.amp)
            .fold(0.0f64, |m, a| m.max(a.abs()));
        let per_logit = (self.selector_width..self.space.dim())
            .map(|j| {
                let (b, v, _) = self.ripple[j];
                2.0 * self.kappa[j] + self.params.roughness * b.abs() * v + amp_max * self.frequency[j]
            })
            .fold(0.0f64, f64::max);
        std::f64::consts::SQRT_2 / 2.0 * 0.5 * c.sqrt() * self.params.scale * per_logit
    }
}

impl Problem for SyntheticProblem {
    fn space(&self) -> &ConfigSpace {
        &self.space
    }

    fn n_classes(&self) -> usize {
        self.params.n_classes
    }

    fn val_labels(&self) -> &[usize] {
        &self.val.labels
    }

    fn test_labels(&self) -> Option<&[usize]> {
        Some(&self.test.labels)
    }

    fn evaluate(&self, config: &Configuration, _seed: u64) -> Result<Evaluation> {
        let e = self.space.encode(config)?;
        Ok(Evaluation {
            val: self.predict(&self.val, &e)?,
            test: Some(self.predict(&self.test, &e)?),
        })
    }

    fn descriptor(&self) -> serde_json::Value {
        json!({
            "kind": "synthetic",
            "params": self.params,
            "space_dim": self.space.dim(),
        })
    }
}
