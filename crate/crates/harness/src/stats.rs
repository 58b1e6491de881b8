//! Rank statistics: Kendall's tau-b and the Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{HarnessError, Result};

/// Significance level for verdicts.
pub const ALPHA: f64 = 0.05;

/// Smallest number of nonzero differences the signed-rank test accepts.
pub const MIN_PAIRS: usize = 6;

/// Largest sample scored by exact enumeration of sign assignments.
pub const EXACT_LIMIT: usize = 12;

fn pairs_of(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Sum of `t(t-1)/2` over runs of equal values in a sorted slice.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += pairs_of(run);
            run = 1;
        }
    }
    total + pairs_of(run)
}

/// Merge sort that returns the number of inversions.
fn sort_counting_swaps(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], buf) + sort_counting_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b by Knight's O(n log n) algorithm. `Ok(None)` when either
/// input is constant, where tau-b is undefined.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(HarnessError::InvalidArgument(format!(
            "kendall_tau needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(HarnessError::InvalidArgument("kendall_tau needs at least two values".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(HarnessError::InvalidArgument("kendall_tau needs finite values".into()));
    }
    let n = a.len() as u64;
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));

    let n0 = pairs_of(n);
    let a_sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let n1 = tied_pairs(&a_sorted);
    let n3 = tied_pairs(&pairs);

    let mut bs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut scratch = Vec::with_capacity(bs.len());
    let swaps = sort_counting_swaps(&mut bs, &mut scratch);
    let n2 = tied_pairs(&bs);

    if n1 == n0 || n2 == n0 {
        return Ok(None);
    }
    // concordant - discordant = n0 - n1 - n2 + n3 - 2 * swaps
    let numerator = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let denominator = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok(Some((numerator / denominator).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Better,
    Same,
    Worse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum Wilcoxon {
    /// Fewer than `MIN_PAIRS` nonzero differences.
    Insufficient { nonzero: usize },
    Tested {
        /// `min(W+, W-)`.
        statistic: f64,
        p_value: f64,
        method: PMethod,
        nonzero: usize,
        verdict: Verdict,
    },
}

impl Wilcoxon {
    pub fn verdict(&self) -> Option<Verdict> {
        match self {
            Wilcoxon::Tested { verdict, .. } => Some(*verdict),
            Wilcoxon::Insufficient { .. } => None,
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        match self {
            Wilcoxon::Tested { p_value, .. } => Some(*p_value),
            Wilcoxon::Insufficient { .. } => None,
        }
    }
}

/// Average ranks (1-based) of `values`, ties sharing the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Two-sided exact p-value of `W+` over all `2^n` sign assignments of the
/// given ranks.
pub fn exact_p_value(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len();
    assert!(n <= 24, "exact enumeration is limited to 24 ranks");
    // Doubled ranks are integers, so sums are exact.
    let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
    let total: u64 = doubled.iter().sum();
    let observed = (2.0 * w_plus).round() as i64;
    let dev = (2 * observed - total as i64).abs();
    let mut extreme = 0u64;
    for mask in 0u64..(1 << n) {
        let s: u64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| doubled[i]).sum();
        if (2 * s as i64 - total as i64).abs() >= dev {
            extreme += 1;
        }
    }
    extreme as f64 / (1u64 << n) as f64
}

/// Two-sided normal approximation with the tie-corrected variance and no
/// continuity correction.
pub fn normal_p_value(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut run = 1.0;
    for w in 0..sorted.len() {
        if w + 1 < sorted.len() && sorted[w + 1] == sorted[w] {
            run += 1.0;
        } else {
            tie_term += run * run * run - run;
            run = 1.0;
        }
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w_plus - mean).abs() / var.sqrt();
    (2.0 * (1.0 - Normal::standard().cdf(z))).min(1.0)
}

/// Paired signed-rank test of `a` against `b` (lower is better). Zero
/// differences are dropped. Up to `EXACT_LIMIT` pairs the p-value is exact;
/// above it the tie-corrected normal approximation is used. The verdict is
/// `Better` when significant and `a` is lower on average.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon> {
    if a.len() != b.len() {
        return Err(HarnessError::InvalidArgument(format!(
            "paired samples differ in length: {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(HarnessError::InvalidArgument("differences must be finite".into()));
    }
    let nonzero = diffs.len();
    if nonzero < MIN_PAIRS {
        return Ok(Wilcoxon::Insufficient { nonzero });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total = nonzero as f64 * (nonzero as f64 + 1.0) / 2.0;
    let w_minus = total - w_plus;
    let (p_value, method) = if nonzero <= EXACT_LIMIT {
        (exact_p_value(&ranks, w_plus), PMethod::Exact)
    } else {
        (normal_p_value(&ranks, w_plus), PMethod::Normal)
    };
    let mean_diff = diffs.iter().sum::<f64>() / nonzero as f64;
    let verdict = if p_value > ALPHA {
        Verdict::Same
    } else if mean_diff < 0.0 {
        Verdict::Better
    } else {
        Verdict::Worse
    };
    Ok(Wilcoxon::Tested {
        statistic: w_plus.min(w_minus),
        p_value,
        method,
        nonzero,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&a, &a).unwrap(), Some(1.0));
        assert_eq!(kendall_tau(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), Some(-1.0));
        let t = kendall_tau(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap().unwrap();
        assert!((t - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(kendall_tau(&a, &[2.0; 4]).unwrap(), None);
        assert!(kendall_tau(&a, &[1.0]).is_err());
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn inversion_count() {
        let mut v = vec![3.0, 1.0, 2.0, 2.0, 0.0];
        assert_eq!(sort_counting_swaps(&mut v, &mut Vec::new()), 7);
        assert_eq!(v, [0.0, 1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[0.3, 0.1, 0.3, 0.2]), [3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn wilcoxon_examples() {
        let b: Vec<f64> = (0..10).map(|i| 0.3 + 0.01 * i as f64).collect();
        let a: Vec<f64> = b.iter().map(|v| v - 0.1).collect();
        let w = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(w.verdict(), Some(Verdict::Better));
        // Every difference is negative: 2 of 1024 sign patterns are as extreme.
        assert!((w.p_value().unwrap() - 2.0 / 1024.0).abs() < 1e-9);
        let flipped = wilcoxon_signed_rank(&b, &a).unwrap();
        assert_eq!(flipped.verdict(), Some(Verdict::Worse));
        assert_eq!(flipped.p_value(), w.p_value());
        assert_eq!(
            wilcoxon_signed_rank(&a, &a).unwrap(),
            Wilcoxon::Insufficient { nonzero: 0 }
        );
    }

    #[test]
    fn normal_approximation_is_used_above_the_exact_limit() {
        let b = vec![0.5; 20];
        let a: Vec<f64> = (0..20).map(|i| 0.5 + if i % 3 == 0 { 0.01 } else { -0.02 } * (i + 1) as f64).collect();
        match wilcoxon_signed_rank(&a, &b).unwrap() {
            Wilcoxon::Tested { method, p_value, .. } => {
                assert_eq!(method, PMethod::Normal);
                assert!((0.0..=1.0).contains(&p_value));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
