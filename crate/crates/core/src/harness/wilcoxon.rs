use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::HarnessError;

/// Fewest non-zero differences for which a p-value is reported.
pub const MIN_PAIRS: usize = 6;
/// Largest count of non-zero differences handled by the exact distribution.
pub const EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Smaller of the positive and negative signed-rank sums.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Non-zero differences used.
    pub pairs: usize,
    pub exact: bool,
    /// Every difference was zero; `p_value` is 1 by convention.
    pub degenerate: bool,
}

/// Average ranks of `values` (ascending), ties sharing their mean rank,
/// returned doubled so they are integers.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Ranks start+1..=end average to (start+1+end)/2.
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            out[i] = doubled;
        }
        start = end;
    }
    out
}

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped; ties share average ranks.
pub fn wilcoxon_signed_rank(sample_a: &[f64], sample_b: &[f64]) -> Result<WilcoxonResult, HarnessError> {
    if sample_a.len() != sample_b.len() {
        return Err(HarnessError::LengthMismatch(sample_a.len(), sample_b.len()));
    }
    let diffs: Vec<f64> = sample_a.iter().zip(sample_b).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(HarnessError::NonFinite);
    }
    if diffs.is_empty() && !sample_a.is_empty() {
        return Ok(WilcoxonResult { statistic: 0.0, p_value: 1.0, pairs: 0, exact: true, degenerate: true });
    }
    let n = diffs.len();
    if n < MIN_PAIRS {
        return Err(HarnessError::InsufficientData(n));
    }
    let ranks = doubled_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let plus: u64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total: u64 = ranks.iter().sum();
    let smaller = plus.min(total - plus);
    let statistic = smaller as f64 / 2.0;

    let (p, exact) = if n <= EXACT_LIMIT {
        // Count sign assignments whose doubled positive-rank sum is <= smaller.
        let mut counts = vec![0f64; total as usize + 1];
        counts[0] = 1.0;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] > 0.0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let tail: f64 = counts[..=smaller as usize].iter().sum();
        (2.0 * tail / 2f64.powi(n as i32), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        for group in sorted.chunk_by(|a, b| a == b) {
            let t = group.len() as f64;
            tie_term += t * t * t - t;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            (1.0, false)
        } else {
            let z = (statistic - mean) / var.sqrt();
            (erfc(z.abs() / std::f64::consts::SQRT_2), false)
        }
    };
    Ok(WilcoxonResult { statistic, p_value: p.min(1.0), pairs: n, exact, degenerate: false })
}
