//! Candidate-set construction: BM25 retrieval over the mention and a
//! context window, then random in-domain padding up to the fixed size.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::el::bm25::{Bm25Params, DomainCollection};
use crate::el::io::{CandidateEntry, CandidateSet, MentionRecord, Provenance};
use crate::error::{BiLinkError, Result};
use crate::text::tokenize;

/// Fixed candidate-list length.
pub const CANDIDATE_COUNT: usize = 64;

/// Context tokens taken from each side of the mention for the query.
pub const CONTEXT_WINDOW: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePolicy {
    pub k: usize,
    /// When the gold document misses the top-k, insert it at the final slot
    /// instead of dropping the mention.
    pub force_gold: bool,
    pub params: Bm25Params,
}

impl Default for CandidatePolicy {
    fn default() -> Self {
        CandidatePolicy { k: CANDIDATE_COUNT, force_gold: false, params: Bm25Params::default() }
    }
}

/// The retrieval query: up to [`CONTEXT_WINDOW`] tokens adjacent to the
/// mention on each side, plus the mention itself.
pub fn retrieval_query(mention: &MentionRecord) -> Vec<String> {
    let left = tokenize(&mention.context_left);
    let right = tokenize(&mention.context_right);
    let skip = left.len().saturating_sub(CONTEXT_WINDOW);
    let mut q: Vec<String> = left[skip..].to_vec();
    q.extend(tokenize(&mention.mention));
    q.extend(right.into_iter().take(CONTEXT_WINDOW));
    q
}

fn mention_rng(seed: u64, mention_id: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(mention_id.as_bytes());
    let mut eight = [0u8; 8];
    eight.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(eight))
}

/// Builds the candidate set for one mention, or `None` when the mention is
/// dropped: nothing retrievable at all, or gold outside the top-k under the
/// default policy.
pub fn build_candidates(
    mention: &MentionRecord,
    collection: &DomainCollection,
    policy: &CandidatePolicy,
    seed: u64,
) -> Result<Option<CandidateSet>> {
    if policy.k == 0 {
        return Err(BiLinkError::Config("candidate count must be positive".into()));
    }
    policy.params.validate()?;
    if mention.domain != collection.domain() {
        return Err(BiLinkError::Referential(format!(
            "mention {} has domain {} but the collection holds {}",
            mention.mention_id,
            mention.domain,
            collection.domain()
        )));
    }
    let gold = collection.doc_index(&mention.entity_id).ok_or_else(|| {
        BiLinkError::Referential(format!(
            "gold entity {} of mention {} is not in domain {}",
            mention.entity_id,
            mention.mention_id,
            collection.domain()
        ))
    })?;

    let query = retrieval_query(mention);
    let hits = collection.retrieve(&query, &policy.params)?;
    if hits.is_empty() {
        warn!("mention {} dropped: no coarse candidates", mention.mention_id);
        return Ok(None);
    }
    let top: Vec<usize> = hits.iter().take(policy.k).map(|&(i, _)| i).collect();

    let mut picked: Vec<(usize, Provenance)>;
    let forced_gold_last;
    match top.iter().position(|&i| i == gold) {
        Some(_) => {
            picked = top.into_iter().map(|i| (i, Provenance::Bm25)).collect();
            forced_gold_last = false;
        }
        None if !policy.force_gold => {
            warn!("mention {} dropped: gold outside the top {}", mention.mention_id, policy.k);
            return Ok(None);
        }
        None => {
            picked = top
                .into_iter()
                .take(policy.k - 1)
                .map(|i| (i, Provenance::Bm25))
                .collect();
            forced_gold_last = true;
        }
    }

    let room = policy.k - picked.len() - usize::from(forced_gold_last);
    if room > 0 {
        let taken: Vec<usize> = picked.iter().map(|&(i, _)| i).collect();
        let pool: Vec<usize> = (0..collection.len())
            .filter(|i| *i != gold && !taken.contains(i))
            .collect();
        if pool.len() < room {
            return Err(BiLinkError::Config(format!(
                "domain {} has only {} documents, cannot fill a {}-candidate set",
                collection.domain(),
                collection.len(),
                policy.k
            )));
        }
        let mut rng = mention_rng(seed, &mention.mention_id);
        let sampled = rand::seq::index::sample(&mut rng, pool.len(), room);
        picked.extend(sampled.iter().map(|j| (pool[j], Provenance::RandomPad)));
    }
    if forced_gold_last {
        picked.push((gold, Provenance::RandomPad));
    }

    let gold_index = picked.iter().position(|&(i, _)| i == gold).unwrap();
    let set = CandidateSet {
        mention_id: mention.mention_id.clone(),
        candidates: picked
            .into_iter()
            .map(|(i, provenance)| CandidateEntry {
                entity_id: collection.doc(i).entity_id.clone(),
                provenance,
            })
            .collect(),
        gold_index,
    };
    set.check(policy.k)?;
    Ok(Some(set))
}

/// Builds sets for a whole mention list, silently skipping dropped mentions.
pub fn build_all_candidates(
    mentions: &[MentionRecord],
    collections: &std::collections::BTreeMap<String, DomainCollection>,
    policy: &CandidatePolicy,
    seed: u64,
) -> Result<Vec<CandidateSet>> {
    let mut out = Vec::with_capacity(mentions.len());
    for m in mentions {
        let coll = collections.get(&m.domain).ok_or_else(|| {
            BiLinkError::Referential(format!("no collection for domain {}", m.domain))
        })?;
        if let Some(set) = build_candidates(m, coll, policy, seed)? {
            out.push(set);
        }
    }
    Ok(out)
}
