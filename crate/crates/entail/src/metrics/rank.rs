//! Ranking metrics for single-step candidate selection: precision at 1 and
//! NDCG with binary gains and log2 discounts.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("cannot rank an empty candidate list")]
    EmptyRanking,
}

/// `labels` are the gold flags of candidates in ranked order, best first.
/// Returns (P@1, NDCG). With no positives both metrics are zero.
pub fn rank_metrics(labels: &[bool]) -> Result<(f64, f64), RankError> {
    if labels.is_empty() {
        return Err(RankError::EmptyRanking);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Ok((0.0, 0.0));
    }
    let p_at_1 = if labels[0] { 1.0 } else { 0.0 };
    let dcg: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| if l { 1.0 / ((i + 2) as f64).log2() } else { 0.0 })
        .sum();
    let ideal: f64 = (0..positives).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    Ok((p_at_1, dcg / ideal))
}
