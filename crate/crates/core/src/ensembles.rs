//! Stored class-probability predictions, the pairwise diversity function,
//! greedy ensemble selection with replacement and diversity diagnostics.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// Tolerance on row sums of a probability matrix.
pub const ROW_SUM_TOLERANCE: f32 = 1e-4;

/// `n_samples x n_classes` row-stochastic matrix of class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    n_samples: usize,
    n_classes: usize,
    values: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    n_samples: usize,
    n_classes: usize,
}

impl PredictionMatrix {
    /// Validates shape, range and row sums.
    pub fn new(n_samples: usize, n_classes: usize, values: Vec<f32>) -> Result<Self> {
        if n_classes == 0 {
            return Err(validation("a prediction matrix needs at least one class"));
        }
        if values.len() != n_samples * n_classes {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {n_samples}x{n_classes}",
                values.len()
            )));
        }
        for (s, row) in values.chunks_exact(n_classes).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(validation(format!("row {s} has a probability outside [0, 1]")));
            }
            let sum: f32 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(validation(format!("row {s} sums to {sum}")));
            }
        }
        Ok(Self {
            n_samples,
            n_classes,
            values,
        })
    }

    /// Builds a matrix from non-negative scores, normalizing each row.
    /// All-zero rows become uniform.
    pub fn from_scores(n_classes: usize, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let mut values = Vec::new();
        let mut n = 0;
        for row in rows {
            if row.len() != n_classes {
                return Err(Error::ShapeMismatch(format!(
                    "row of width {} for {n_classes} classes",
                    row.len()
                )));
            }
            let total: f64 = row.iter().map(|v| v.max(0.0)).sum();
            if total > 0.0 && total.is_finite() {
                values.extend(row.iter().map(|v| (v.max(0.0) / total) as f32));
            } else {
                values.extend(std::iter::repeat_n(1.0 / n_classes as f32, n_classes));
            }
            n += 1;
        }
        Self::new(n, n_classes, values)
    }

    pub fn uniform(n_samples: usize, n_classes: usize) -> Self {
        Self {
            n_samples,
            n_classes,
            values: vec![1.0 / n_classes as f32; n_samples * n_classes],
        }
    }

    pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Self> {
        let mut values = vec![0.0f32; labels.len() * n_classes];
        for (s, &l) in labels.iter().enumerate() {
            if l >= n_classes {
                return Err(validation(format!("label {l} out of range for {n_classes} classes")));
            }
            values[s * n_classes + l] = 1.0;
        }
        Self::new(labels.len(), n_classes, values)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, s: usize) -> &[f32] {
        &self.values[s * self.n_classes..(s + 1) * self.n_classes]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Predicted class per row; ties go to the lowest class index.
    pub fn argmax(&self) -> Vec<usize> {
        self.values.chunks_exact(self.n_classes).map(argmax).collect()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.n_samples != other.n_samples || self.n_classes != other.n_classes {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.n_samples, self.n_classes, other.n_samples, other.n_classes
            )));
        }
        Ok(())
    }

    /// Restricts the matrix to the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_classes);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self {
            n_samples: rows.len(),
            n_classes: self.n_classes,
            values,
        }
    }

    fn sidecar_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }

    /// Writes little-endian `f32` values row-major to `path` and the shape to
    /// `<path>.json`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&bytes)?;
        let sidecar = Sidecar {
            n_samples: self.n_samples,
            n_classes: self.n_classes,
        };
        std::fs::write(Self::sidecar_path(path), serde_json::to_vec(&sidecar)?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(Self::sidecar_path(path))?)?;
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() != sidecar.n_samples * sidecar.n_classes * 4 {
            return Err(Error::ShapeMismatch(format!(
                "{} bytes for {}x{} f32 values",
                bytes.len(),
                sidecar.n_samples,
                sidecar.n_classes
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Self::new(sidecar.n_samples, sidecar.n_classes, values)
    }
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Anything that can hand out the stored prediction matrix of observation `i`.
pub trait PredictionStore {
    fn len(&self) -> usize;
    fn prediction(&self, index: usize) -> &PredictionMatrix;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PredictionStore for [PredictionMatrix] {
    fn len(&self) -> usize {
        <[PredictionMatrix]>::len(self)
    }

    fn prediction(&self, index: usize) -> &PredictionMatrix {
        &self[index]
    }
}

impl PredictionStore for Vec<PredictionMatrix> {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn prediction(&self, index: usize) -> &PredictionMatrix {
        &self[index]
    }
}

/// Ordered multiset of observation indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnsemblePool {
    members: Vec<usize>,
}

impl EnsemblePool {
    pub fn new(members: Vec<usize>) -> Self {
        Self { members }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Distinct members in first-appearance order.
    pub fn unique(&self) -> Vec<usize> {
        let mut seen = Vec::new();
        for &m in &self.members {
            if !seen.contains(&m) {
                seen.push(m);
            }
        }
        seen
    }

    /// Member multiplicities keyed by observation index.
    pub fn counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for &m in &self.members {
            *counts.entry(m).or_insert(0) += 1;
        }
        counts
    }

    /// Equality as multisets, ignoring insertion order.
    pub fn same_multiset(&self, other: &Self) -> bool {
        self.counts() == other.counts()
    }
}

/// Pairwise diversity: `(sqrt(2)/2) * mean_s ||p_s - q_s||_2`, in `[0, 1]`.
pub fn diversity(p: &PredictionMatrix, q: &PredictionMatrix) -> Result<f64> {
    p.check_same_shape(q)?;
    Ok(diversity_on(p, q, None))
}

/// Diversity restricted to a subset of sample rows (all rows when `None`).
pub(crate) fn diversity_on(p: &PredictionMatrix, q: &PredictionMatrix, rows: Option<&[usize]>) -> f64 {
    let c = p.n_classes;
    let dist = |s: usize| -> f64 {
        let (a, b) = (p.row(s), q.row(s));
        (0..c)
            .map(|k| {
                let d = a[k] as f64 - b[k] as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let (total, n) = match rows {
        Some(rows) => (rows.iter().map(|&s| dist(s)).sum::<f64>(), rows.len()),
        None => ((0..p.n_samples).map(dist).sum::<f64>(), p.n_samples),
    };
    if n == 0 {
        return 0.0;
    }
    (total / n as f64 / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Uniform average of the pool's member predictions, multiplicity counted.
///
/// Sums run in `f64` in pool order and are rounded to `f32` once.
pub fn ensemble_predict<S: PredictionStore + ?Sized>(store: &S, pool: &EnsemblePool) -> Result<PredictionMatrix> {
    let Some(&first) = pool.members.first() else {
        return Err(Error::EmptyPool);
    };
    check_indices(store, pool)?;
    let shape = store.prediction(first);
    let mut sums = vec![0.0f64; shape.values.len()];
    for &m in &pool.members {
        let p = store.prediction(m);
        shape.check_same_shape(p)?;
        for (acc, &v) in sums.iter_mut().zip(&p.values) {
            *acc += v as f64;
        }
    }
    let k = pool.members.len() as f64;
    Ok(PredictionMatrix {
        n_samples: shape.n_samples,
        n_classes: shape.n_classes,
        values: sums.iter().map(|s| (s / k) as f32).collect(),
    })
}

fn check_indices<S: PredictionStore + ?Sized>(store: &S, pool: &EnsemblePool) -> Result<()> {
    if let Some(&bad) = pool.members.iter().find(|&&m| m >= store.len()) {
        return Err(validation(format!(
            "pool member {bad} is not an observation (have {})",
            store.len()
        )));
    }
    Ok(())
}

fn check_labels(labels: &[usize], n_samples: usize, n_classes: usize) -> Result<()> {
    if labels.len() != n_samples {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {n_samples} samples",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(validation(format!("label {bad} out of range for {n_classes} classes")));
    }
    Ok(())
}

/// Fraction of rows whose argmax differs from the label.
pub fn classification_error(p: &PredictionMatrix, labels: &[usize]) -> Result<f64> {
    check_labels(labels, p.n_samples, p.n_classes)?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let wrong = p
        .values
        .chunks_exact(p.n_classes)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) != l)
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Greedy forward selection with replacement over `E` rounds. Each round adds
/// the observation whose inclusion gives the lowest ensemble validation
/// error, ties going to the earliest observation.
pub fn ensemble_selection<S: PredictionStore + ?Sized>(
    store: &S,
    labels: &[usize],
    ensemble_size: usize,
) -> Result<EnsemblePool> {
    if store.is_empty() {
        return Err(validation("ensemble selection needs at least one observation"));
    }
    if ensemble_size == 0 {
        return Err(validation("ensemble size must be at least 1"));
    }
    let shape = store.prediction(0);
    let (n, c) = (shape.n_samples, shape.n_classes);
    check_labels(labels, n, c)?;
    for i in 1..store.len() {
        shape.check_same_shape(store.prediction(i))?;
    }

    let mut sums = vec![0.0f64; n * c];
    let mut members = Vec::with_capacity(ensemble_size);
    let mut row = vec![0.0f32; c];
    for round in 0..ensemble_size {
        let k = (round + 1) as f64;
        let mut best: Option<(usize, usize)> = None;
        for a in 0..store.len() {
            let p = &store.prediction(a).values;
            let mut wrong = 0;
            for s in 0..n {
                for j in 0..c {
                    row[j] = ((sums[s * c + j] + p[s * c + j] as f64) / k) as f32;
                }
                if argmax(&row) != labels[s] {
                    wrong += 1;
                }
            }
            if best.is_none_or(|(w, _)| wrong < w) {
                best = Some((wrong, a));
            }
        }
        let (_, chosen) = best.expect("store is non-empty");
        for (acc, &v) in sums.iter_mut().zip(&store.prediction(chosen).values) {
            *acc += v as f64;
        }
        members.push(chosen);
    }
    Ok(EnsemblePool { members })
}

/// Smallest ground-truth diversity between `candidate` and any pool member.
pub fn min_diversity_to_pool<S: PredictionStore + ?Sized>(
    store: &S,
    pool: &EnsemblePool,
    candidate: usize,
) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    check_indices(store, pool)?;
    if candidate >= store.len() {
        return Err(validation(format!("candidate {candidate} is not an observation")));
    }
    let cand = store.prediction(candidate);
    pool.unique()
        .into_iter()
        .map(|m| diversity(store.prediction(m), cand))
        .try_fold(f64::INFINITY, |acc, d| d.map(|d| acc.min(d)))
}

/// Fraction of samples on which the two predicted labels differ.
pub fn pairwise_disagreement(p: &PredictionMatrix, q: &PredictionMatrix) -> Result<f64> {
    p.check_same_shape(q)?;
    if p.n_samples == 0 {
        return Ok(0.0);
    }
    let differ = p
        .values
        .chunks_exact(p.n_classes)
        .zip(q.values.chunks_exact(q.n_classes))
        .filter(|(a, b)| argmax(a) != argmax(b))
        .count();
    Ok(differ as f64 / p.n_samples as f64)
}

/// Mean disagreement over all unordered pairs of distinct pool members; zero
/// for a single distinct member.
pub fn mean_pool_disagreement<S: PredictionStore + ?Sized>(store: &S, pool: &EnsemblePool) -> Result<f64> {
    check_indices(store, pool)?;
    let unique = pool.unique();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..unique.len() {
        for j in i + 1..unique.len() {
            total += pairwise_disagreement(store.prediction(unique[i]), store.prediction(unique[j]))?;
            pairs += 1;
        }
    }
    Ok(if pairs == 0 { 0.0 } else { total / pairs as f64 })
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(n: usize, c: usize) -> impl Strategy<Value = PredictionMatrix> {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, c), n)
            .prop_map(move |rows| PredictionMatrix::from_scores(c, rows).unwrap())
    }

    fn pair() -> impl Strategy<Value = (PredictionMatrix, PredictionMatrix)> {
        (1usize..30, 2usize..6).prop_flat_map(|(n, c)| (matrix(n, c), matrix(n, c)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn diversity_is_a_symmetric_unit_measure((p, q) in pair()) {
            let d = diversity(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, diversity(&q, &p).unwrap());
            prop_assert_eq!(diversity(&p, &p).unwrap(), 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn disagreement_is_bounded((p, q) in pair()) {
            let d = pairwise_disagreement(&p, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d == 0.0, p.argmax() == q.argmax());
        }

        #[test]
        fn greedy_rounds_pick_the_best_single_addition(
            store in (2usize..7, 5usize..30, 2usize..4)
                .prop_flat_map(|(m, n, c)| prop::collection::vec(matrix(n, c), m)),
            seed in any::<u64>(),
        ) {
            let n = store[0].n_samples();
            let c = store[0].n_classes();
            let labels: Vec<usize> = (0..n).map(|s| (crate::rng::derive(seed, &[s as u64]) % c as u64) as usize).collect();
            let pool = ensemble_selection(&store, &labels, 6).unwrap();
            let error_of = |members: &[usize]| {
                let p = ensemble_predict(&store, &EnsemblePool::new(members.to_vec())).unwrap();
                classification_error(&p, &labels).unwrap()
            };
            for k in 0..pool.len() {
                let prefix = &pool.members()[..k];
                let errors: Vec<f64> = (0..store.len())
                    .map(|j| error_of(&[prefix, &[j]].concat()))
                    .collect();
                let best = errors.iter().cloned().fold(f64::INFINITY, f64::min);
                let expected = errors.iter().position(|&e| e == best).unwrap();
                prop_assert_eq!(pool.members()[k], expected, "round {}", k + 1);
            }
            if pool.len() >= 2 {
                prop_assert!(error_of(&pool.members()[..2]) <= error_of(&pool.members()[..1]));
            }
        }
    }

    #[test]
    fn later_greedy_rounds_can_exceed_the_first() {
        // Class-0 probabilities, every label is 0. Round two ties with
        // re-adding member 1 and takes the lower index, round three loses a sample.
        let m = |p: [f64; 3]| PredictionMatrix::from_scores(2, p.iter().map(|&v| vec![v, 1.0 - v])).unwrap();
        let store = vec![m([0.0, 0.2, 1.0]), m([0.6, 1.0, 0.2])];
        let labels = [0, 0, 0];
        let pool = ensemble_selection(&store, &labels, 3).unwrap();
        assert_eq!(pool.members(), &[1, 0, 0]);
        let error_of = |k: usize| {
            let p = ensemble_predict(&store, &EnsemblePool::new(pool.members()[..k].to_vec())).unwrap();
            classification_error(&p, &labels).unwrap()
        };
        assert_eq!(error_of(1), 1.0 / 3.0);
        assert_eq!(error_of(2), 1.0 / 3.0);
        assert_eq!(error_of(3), 2.0 / 3.0);
    }
}
