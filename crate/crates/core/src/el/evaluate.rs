//! Candidate-set ranking: the gold document against its own 64 rivals.
//!
//! No filter set applies; the candidate lists are already curated, so the
//! rank is simply one plus the number of rivals scoring at least as high.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::debug;

use crate::el::bm25::DomainCollection;
use crate::el::encode::{encode_candidate, encode_mention};
use crate::el::io::{CandidateSet, MentionRecord};
use crate::error::{BiLinkError, Result};
use crate::eval::{filtered_rank, metrics, RankingMetrics};
use crate::model::ParamStore;
use crate::nn::Tape;
use crate::train::cosine_sim;

/// Rank of the gold entry within one score list, pessimistic on ties.
pub fn rank_in_set(scores: &[f64], gold_index: usize) -> Result<usize> {
    if gold_index >= scores.len() {
        return Err(BiLinkError::Eval(format!(
            "gold index {gold_index} out of range for {} scores",
            scores.len()
        )));
    }
    let table: BTreeMap<usize, f64> = scores.iter().copied().enumerate().collect();
    filtered_rank(&table, gold_index, &BTreeSet::new())
}

/// Ranks every mention's gold within its candidate set by cosine between
/// the mention embedding and each candidate embedding.
pub fn el_evaluate(
    store: &ParamStore,
    mentions: &[MentionRecord],
    sets: &[CandidateSet],
    collections: &BTreeMap<String, DomainCollection>,
) -> Result<RankingMetrics> {
    let set_of: HashMap<&str, &CandidateSet> =
        sets.iter().map(|s| (s.mention_id.as_str(), s)).collect();
    let mut cache: HashMap<(String, String), Vec<f64>> = HashMap::new();
    let mut ranks = Vec::new();
    for m in mentions {
        let Some(set) = set_of.get(m.mention_id.as_str()) else {
            debug!("mention {} skipped at evaluation: no candidate set", m.mention_id);
            continue;
        };
        let coll = collections.get(&m.domain).ok_or_else(|| {
            BiLinkError::Referential(format!("no collection for domain {}", m.domain))
        })?;
        let mut tape = Tape::new();
        let mention_emb = encode_mention(&mut tape, store, m)?;
        let mention_vec = tape.value(mention_emb).data.clone();
        let mut scores = Vec::with_capacity(set.candidates.len());
        for c in &set.candidates {
            let key = (m.domain.clone(), c.entity_id.clone());
            if !cache.contains_key(&key) {
                let mut ct = Tape::new();
                let emb = encode_candidate(&mut ct, store, coll, &c.entity_id)?;
                cache.insert(key.clone(), ct.value(emb).data.clone());
            }
            scores.push(cosine_sim(&mention_vec, &cache[&key], 1.0)?);
        }
        ranks.push(rank_in_set(&scores, set.gold_index)?);
    }
    if ranks.is_empty() {
        return Err(BiLinkError::Eval("no mention had a candidate set".into()));
    }
    metrics(&ranks)
}
