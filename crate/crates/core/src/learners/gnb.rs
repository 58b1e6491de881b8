use crate::ensembles::PredictionMatrix;
use crate::error::Result;
use crate::treereg::FeatureMatrix;

/// Gaussian naive Bayes with variance smoothing proportional to the
/// largest feature variance.
#[derive(Debug, Clone)]
pub struct GaussianNb {
    /// `log P(class)`, `-inf` for classes absent from training.
    log_prior: Vec<f64>,
    mean: Vec<Vec<f64>>,
    var: Vec<Vec<f64>>,
}

impl GaussianNb {
    pub fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, var_smoothing: f64) -> Self {
        let d = x.n_cols();
        let n = y.len() as f64;
        let mut count = vec![0usize; n_classes];
        let mut mean = vec![vec![0.0; d]; n_classes];
        for (row, &c) in x.rows().zip(y) {
            count[c] += 1;
            mean[c].iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        for (m, &k) in mean.iter_mut().zip(&count) {
            if k > 0 {
                m.iter_mut().for_each(|v| *v /= k as f64);
            }
        }
        let mut var = vec![vec![0.0; d]; n_classes];
        for (row, &c) in x.rows().zip(y) {
            for j in 0..d {
                let e = row[j] - mean[c][j];
                var[c][j] += e * e;
            }
        }
        for (v, &k) in var.iter_mut().zip(&count) {
            if k > 0 {
                v.iter_mut().for_each(|s| *s /= k as f64);
            }
        }

        let mut overall = 0.0f64;
        for j in 0..d {
            let m = x.rows().map(|r| r[j]).sum::<f64>() / n;
            let v = x.rows().map(|r| (r[j] - m) * (r[j] - m)).sum::<f64>() / n;
            overall = overall.max(v);
        }
        let epsilon = var_smoothing * if overall > 0.0 { overall } else { 1.0 };
        for v in var.iter_mut() {
            v.iter_mut().for_each(|s| *s += epsilon);
        }
        let log_prior = count
            .iter()
            .map(|&k| if k > 0 { (k as f64 / n).ln() } else { f64::NEG_INFINITY })
            .collect();
        Self { log_prior, mean, var }
    }

    pub fn predict(&self, q: &FeatureMatrix) -> Result<PredictionMatrix> {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut out = Vec::with_capacity(q.n_rows());
        for row in q.rows() {
            let mut logp: Vec<f64> = (0..self.log_prior.len())
                .map(|c| {
                    if self.log_prior[c] == f64::NEG_INFINITY {
                        return f64::NEG_INFINITY;
                    }
                    let ll: f64 = row
                        .iter()
                        .zip(&self.mean[c])
                        .zip(&self.var[c])
                        .map(|((v, m), s)| -0.5 * ((two_pi * s).ln() + (v - m) * (v - m) / s))
                        .sum();
                    self.log_prior[c] + ll
                })
                .collect();
            super::softmax(&mut logp);
            out.push(logp);
        }
        super::normalize(self.log_prior.len(), out)
    }
}
