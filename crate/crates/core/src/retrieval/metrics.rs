//! Retrieval quality metrics. All of them depend only on the rank order.

use std::collections::BTreeSet;

use super::{ImageId, Ranking};
use crate::error::{check_dim, Error, Result};

/// Average precision of one ranking; relevant images missing from the ranking count as misses.
pub fn average_precision(ranking: &Ranking, relevant: &BTreeSet<ImageId>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::invalid("query has no relevant images"));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, entry) in ranking.entries().iter().enumerate() {
        if relevant.contains(&entry.id) {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
            if hits == relevant.len() {
                break;
            }
        }
    }
    Ok(sum / relevant.len() as f64)
}

pub fn mean_average_precision(rankings: &[Ranking], relevance: &[BTreeSet<ImageId>]) -> Result<f64> {
    check_dim(rankings.len(), relevance.len())?;
    if rankings.is_empty() {
        return Err(Error::EmptyInput("rankings"));
    }
    let mut total = 0.0;
    for (r, rel) in rankings.iter().zip(relevance) {
        total += average_precision(r, rel)?;
    }
    Ok(total / rankings.len() as f64)
}

/// 1-based rank of `reference`.
pub fn rank_of(ranking: &Ranking, reference: ImageId) -> Result<usize> {
    ranking
        .position(reference)
        .map(|p| p + 1)
        .ok_or_else(|| Error::Missing(format!("reference image {reference} absent from ranking")))
}

/// Fraction of queries whose reference image is within the top `n`.
pub fn recall_at(rankings: &[Ranking], references: &[ImageId], n: usize) -> Result<f64> {
    check_dim(rankings.len(), references.len())?;
    if rankings.is_empty() {
        return Err(Error::EmptyInput("rankings"));
    }
    let mut found = 0usize;
    for (r, &reference) in rankings.iter().zip(references) {
        if rank_of(r, reference)? <= n {
            found += 1;
        }
    }
    Ok(found as f64 / rankings.len() as f64)
}

/// NDCG with a single relevant item at 1-based rank `r`: `1 / log2(r + 1)`.
pub fn ndcg(rank: usize) -> f64 {
    assert!(rank >= 1, "ranks are 1-based");
    1.0 / ((rank + 1) as f64).log2()
}

pub fn mean_ndcg(rankings: &[Ranking], references: &[ImageId]) -> Result<f64> {
    check_dim(rankings.len(), references.len())?;
    if rankings.is_empty() {
        return Err(Error::EmptyInput("rankings"));
    }
    let mut total = 0.0;
    for (r, &reference) in rankings.iter().zip(references) {
        total += ndcg(rank_of(r, reference)?);
    }
    Ok(total / rankings.len() as f64)
}
