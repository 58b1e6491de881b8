use crate::ensembles::PredictionMatrix;
use crate::error::Result;
use crate::treereg::FeatureMatrix;

/// Weights are clamped to this magnitude so diverging runs stay finite.
const WEIGHT_LIMIT: f64 = 1e3;

/// Multinomial logistic regression trained by full-batch gradient descent
/// with an L2 penalty on the weights (not the intercepts).
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    /// `n_classes x (n_features + 1)`, intercept last.
    weights: Vec<Vec<f64>>,
}

impl LogisticRegression {
    pub fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, learning_rate: f64, l2: f64, epochs: usize) -> Self {
        let d = x.n_cols();
        let n = y.len() as f64;
        let mut weights = vec![vec![0.0; d + 1]; n_classes];
        let mut grad = vec![vec![0.0; d + 1]; n_classes];
        let mut p = vec![0.0; n_classes];
        for _ in 0..epochs {
            grad.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            for (row, &label) in x.rows().zip(y) {
                logits(&weights, row, &mut p);
                super::softmax(&mut p);
                for c in 0..n_classes {
                    let e = p[c] - if c == label { 1.0 } else { 0.0 };
                    let g = &mut grad[c];
                    for j in 0..d {
                        g[j] += e * row[j];
                    }
                    g[d] += e;
                }
            }
            for (w, g) in weights.iter_mut().zip(&grad) {
                for j in 0..=d {
                    let penalty = if j < d { l2 * w[j] } else { 0.0 };
                    let next = w[j] - learning_rate * (g[j] / n + penalty);
                    w[j] = if next.is_finite() {
                        next.clamp(-WEIGHT_LIMIT, WEIGHT_LIMIT)
                    } else {
                        0.0
                    };
                }
            }
        }
        Self { weights }
    }

    pub fn predict(&self, q: &FeatureMatrix) -> Result<PredictionMatrix> {
        let k = self.weights.len();
        let mut out = Vec::with_capacity(q.n_rows());
        for row in q.rows() {
            let mut p = vec![0.0; k];
            logits(&self.weights, row, &mut p);
            super::softmax(&mut p);
            out.push(p);
        }
        super::normalize(k, out)
    }
}

fn logits(weights: &[Vec<f64>], row: &[f64], out: &mut [f64]) {
    let d = row.len();
    for (o, w) in out.iter_mut().zip(weights) {
        *o = w[d] + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    }
}
