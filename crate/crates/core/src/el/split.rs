//! Mention splits whose gold entities never cross subsets.
//!
//! Within each domain the distinct gold entities are partitioned into
//! train, valid, and test groups; every mention follows its gold. A test
//! mention therefore always points at an entity no training mention used.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::el::io::MentionRecord;
use crate::error::{BiLinkError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ElSplits {
    pub train: Vec<MentionRecord>,
    pub valid: Vec<MentionRecord>,
    pub test: Vec<MentionRecord>,
}

/// Splits mentions by assigning each domain's gold entities to subsets in
/// the given proportions. Domains with fewer than 3 distinct gold entities
/// are skipped with a warning.
pub fn build_inductive_splits(
    mentions: &[MentionRecord],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<ElSplits> {
    let (rt, rv, rs) = ratios;
    for r in [rt, rv, rs] {
        if !(r.is_finite() && r >= 0.0) {
            return Err(BiLinkError::Config(format!("split ratios must be finite and >= 0, got {r}")));
        }
    }
    let total = rt + rv + rs;
    if total <= 0.0 {
        return Err(BiLinkError::Config("split ratios sum to zero".into()));
    }
    if mentions.is_empty() {
        return Err(BiLinkError::Config("no mentions to split".into()));
    }

    let mut by_domain: BTreeMap<&str, Vec<&MentionRecord>> = BTreeMap::new();
    for m in mentions {
        by_domain.entry(&m.domain).or_default().push(m);
    }

    let mut out = ElSplits::default();
    for (domain, ms) in &by_domain {
        let mut golds: Vec<&str> = {
            let set: BTreeSet<&str> = ms.iter().map(|m| m.entity_id.as_str()).collect();
            set.into_iter().collect()
        };
        if golds.len() < 3 {
            warn!("domain {domain} skipped: only {} distinct gold entities", golds.len());
            continue;
        }
        let digest = Sha256::digest(domain.as_bytes());
        let mut eight = [0u8; 8];
        eight.copy_from_slice(&digest[..8]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ u64::from_le_bytes(eight));
        golds.shuffle(&mut rng);

        let n = golds.len();
        let n_valid = (n as f64 * rv / total).round() as usize;
        let n_test = ((n as f64 * rs / total).round() as usize).min(n - n_valid);
        let (valid_golds, rest) = golds.split_at(n_valid);
        let (test_golds, _train_golds) = rest.split_at(n_test);
        let valid_set: BTreeSet<&str> = valid_golds.iter().copied().collect();
        let test_set: BTreeSet<&str> = test_golds.iter().copied().collect();

        for m in ms {
            let target = if valid_set.contains(m.entity_id.as_str()) {
                &mut out.valid
            } else if test_set.contains(m.entity_id.as_str()) {
                &mut out.test
            } else {
                &mut out.train
            };
            target.push((*m).clone());
        }
    }
    if out.train.is_empty() && out.valid.is_empty() && out.test.is_empty() {
        return Err(BiLinkError::Config(
            "every domain was skipped; none has 3 distinct gold entities".into(),
        ));
    }
    Ok(out)
}
