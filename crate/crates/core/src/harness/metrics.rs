use super::HarnessError;

/// 1-based rank of the first correct result, `None` for a miss.
pub type Rank = Option<usize>;

fn check(ranks: &[Rank], k: usize) -> Result<(), HarnessError> {
    if ranks.is_empty() {
        return Err(HarnessError::NoQueries);
    }
    if k == 0 {
        return Err(HarnessError::InvalidCutoff);
    }
    Ok(())
}

/// Fraction of queries whose correct result is within the top `k`.
pub fn success_rate_at_k(ranks: &[Rank], k: usize) -> Result<f64, HarnessError> {
    check(ranks, k)?;
    let hits = ranks.iter().filter(|r| matches!(r, Some(x) if *x <= k)).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// Mean reciprocal rank with reciprocal ranks beyond `k` counted as zero.
pub fn mrr(ranks: &[Rank], k: usize) -> Result<f64, HarnessError> {
    check(ranks, k)?;
    let total: f64 = ranks
        .iter()
        .map(|r| match r {
            Some(x) if *x <= k => 1.0 / *x as f64,
            _ => 0.0,
        })
        .sum();
    Ok(total / ranks.len() as f64)
}
