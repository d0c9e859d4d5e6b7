//! Filtered ranking and aggregate retrieval metrics.
//!
//! Ranks are pessimistic: every non-gold candidate scoring at least as high
//! as the gold counts as ranked above it, so tied scores can only hurt.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{BiLinkError, Result};

/// Aggregate metrics over a set of ranked queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
}

impl RankingMetrics {
    /// Internal consistency of a metrics block computed from positive ranks.
    pub fn check(&self) -> Result<()> {
        let ordered = self.hits1 <= self.hits3 && self.hits3 <= self.hits10;
        let bounded = self.mrr > 0.0 && self.mrr <= 1.0 && self.mrr >= self.hits1;
        if !ordered || !bounded {
            return Err(BiLinkError::Numeric(format!(
                "inconsistent metrics: mrr {} hits {} {} {}",
                self.mrr, self.hits1, self.hits3, self.hits10
            )));
        }
        Ok(())
    }

    /// Fieldwise mean of two directions' metrics; query counts add.
    pub fn average(a: &RankingMetrics, b: &RankingMetrics) -> RankingMetrics {
        RankingMetrics {
            mrr: (a.mrr + b.mrr) / 2.0,
            hits1: (a.hits1 + b.hits1) / 2.0,
            hits3: (a.hits3 + b.hits3) / 2.0,
            hits10: (a.hits10 + b.hits10) / 2.0,
            n_queries: a.n_queries + b.n_queries,
        }
    }
}

/// Rank of the gold entity after dropping every other known-true candidate.
///
/// The filter never removes the gold itself. Candidates tied with the gold
/// count against it.
pub fn filtered_rank(
    scores: &BTreeMap<usize, f64>,
    gold: usize,
    filter: &BTreeSet<usize>,
) -> Result<usize> {
    let gold_score = *scores
        .get(&gold)
        .ok_or_else(|| BiLinkError::Eval(format!("gold entity {gold} has no score")))?;
    let mut rank = 1usize;
    for (&c, &s) in scores {
        if !s.is_finite() {
            return Err(BiLinkError::Numeric(format!(
                "non-finite score {s} for entity {c}"
            )));
        }
        if c == gold || filter.contains(&c) {
            continue;
        }
        if s >= gold_score {
            rank += 1;
        }
    }
    Ok(rank)
}

/// MRR and Hits@{1,3,10} over a nonempty list of positive ranks.
pub fn metrics(ranks: &[usize]) -> Result<RankingMetrics> {
    if ranks.is_empty() {
        return Err(BiLinkError::Eval("no ranks to aggregate".into()));
    }
    if ranks.contains(&0) {
        return Err(BiLinkError::Eval("ranks start at 1".into()));
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    let out = RankingMetrics {
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        hits1: hits(1),
        hits3: hits(3),
        hits10: hits(10),
        n_queries: ranks.len(),
    };
    out.check()?;
    Ok(out)
}
