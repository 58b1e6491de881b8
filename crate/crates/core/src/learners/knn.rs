use crate::ensembles::PredictionMatrix;
use crate::error::Result;
use crate::treereg::FeatureMatrix;

/// Brute-force k-nearest neighbours under Euclidean distance.
#[derive(Debug, Clone)]
pub struct Knn {
    x: FeatureMatrix,
    y: Vec<usize>,
    n_classes: usize,
    k: usize,
    distance_weighted: bool,
}

impl Knn {
    pub fn fit(x: &FeatureMatrix, y: &[usize], n_classes: usize, k: usize, distance_weighted: bool) -> Self {
        Self {
            x: x.clone(),
            y: y.to_vec(),
            n_classes,
            k: k.clamp(1, y.len()),
            distance_weighted,
        }
    }

    /// Neighbour class frequencies, or inverse-distance weights. Exact
    /// matches take all the weight when distance weighting is on.
    pub fn predict(&self, q: &FeatureMatrix) -> Result<PredictionMatrix> {
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(self.y.len());
        let mut out = Vec::with_capacity(q.n_rows());
        for row in q.rows() {
            dist.clear();
            for (i, t) in self.x.rows().enumerate() {
                let d: f64 = row.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
                dist.push((d, i));
            }
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if self.k < dist.len() {
                dist.select_nth_unstable_by(self.k - 1, cmp);
            }
            let neighbours = &mut dist[..self.k];
            neighbours.sort_unstable_by(cmp);

            let mut scores = vec![0.0; self.n_classes];
            if self.distance_weighted {
                let exact = neighbours.iter().filter(|(d, _)| *d == 0.0).count();
                for &(d, i) in neighbours.iter() {
                    let w = if exact > 0 {
                        if d == 0.0 { 1.0 } else { 0.0 }
                    } else {
                        1.0 / d.sqrt()
                    };
                    scores[self.y[i]] += w;
                }
            } else {
                for &(_, i) in neighbours.iter() {
                    scores[self.y[i]] += 1.0;
                }
            }
            out.push(scores);
        }
        super::normalize(self.n_classes, out)
    }
}
