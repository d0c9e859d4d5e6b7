//! Contrastive mention-to-candidate training with shared in-batch
//! negatives.
//!
//! Every mention scores its own gold against one shared negative pool: the
//! deduplicated union of all candidates in the batch minus every in-batch
//! gold. Mentions themselves never enter the pool.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::el::bm25::DomainCollection;
use crate::el::encode::{encode_candidate_train, encode_mention_train};
use crate::el::io::{CandidateSet, MentionRecord};
use crate::error::{BiLinkError, Result};
use crate::model::ParamStore;
use crate::nn::{AdamW, AdamWConfig, NodeId, Tape, Tensor};
use crate::train::{make_batches, TrainConfig};

/// One mention's contribution to a batch loss. Candidate keys are opaque;
/// the trainer qualifies entity ids with their domain so equal ids from
/// different domains stay distinct.
#[derive(Debug, Clone)]
pub struct ElLossItem {
    pub mention: NodeId,
    pub gold: String,
    pub candidates: Vec<String>,
}

/// The shared negative pool: all candidates of the batch, deduplicated,
/// with every in-batch gold removed.
pub fn negative_pool(batch: &[ElLossItem]) -> BTreeSet<String> {
    let golds: BTreeSet<&str> = batch.iter().map(|i| i.gold.as_str()).collect();
    batch
        .iter()
        .flat_map(|i| i.candidates.iter())
        .filter(|c| !golds.contains(c.as_str()))
        .cloned()
        .collect()
}

/// Mean softmax cross-entropy of each mention against its gold over the
/// shared pool, with similarities `cos / t`.
pub fn el_batch_loss(
    tape: &mut Tape,
    batch: &[ElLossItem],
    embeddings: &BTreeMap<String, NodeId>,
    t: f64,
) -> Result<NodeId> {
    if batch.is_empty() {
        return Err(BiLinkError::Batch("entity-linking loss needs at least one mention".into()));
    }
    if t <= 0.0 {
        return Err(BiLinkError::Numeric(format!("temperature {t} must be positive")));
    }
    let lookup = |key: &str| {
        embeddings.get(key).copied().ok_or_else(|| {
            BiLinkError::Referential(format!("no embedding for candidate {key}"))
        })
    };
    let negatives = negative_pool(batch);
    let mut terms = Vec::with_capacity(batch.len());
    for item in batch {
        if !item.candidates.contains(&item.gold) {
            return Err(BiLinkError::Referential(format!(
                "gold {} missing from its own candidate list",
                item.gold
            )));
        }
        let mut scores = Vec::with_capacity(1 + negatives.len());
        let gold_emb = lookup(&item.gold)?;
        scores.push(tape.cos_sim_scaled(item.mention, gold_emb, t));
        for neg in &negatives {
            let emb = lookup(neg)?;
            scores.push(tape.cos_sim_scaled(item.mention, emb, t));
        }
        let row = tape.concat_cols(&scores);
        let lse = tape.log_sum_exp(row);
        terms.push(tape.sub(lse, scores[0]));
    }
    Ok(tape.mean_vars(&terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElEpochReport {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub seed: u64,
}

fn qualified(domain: &str, entity_id: &str) -> String {
    format!("{domain}:{entity_id}")
}

/// Trains the paired encoders and the soft prompts in place on mention
/// batches. Candidate sets must be present for every training mention.
pub fn el_train(
    store: &mut ParamStore,
    mentions: &[MentionRecord],
    sets: &[CandidateSet],
    collections: &BTreeMap<String, DomainCollection>,
    cfg: &TrainConfig,
) -> Result<Vec<ElEpochReport>> {
    cfg.validate()?;
    if mentions.is_empty() {
        return Err(BiLinkError::Config("no training mentions".into()));
    }
    let set_of: HashMap<&str, &CandidateSet> =
        sets.iter().map(|s| (s.mention_id.as_str(), s)).collect();
    for m in mentions {
        if !set_of.contains_key(m.mention_id.as_str()) {
            return Err(BiLinkError::Referential(format!(
                "training mention {} has no candidate set",
                m.mention_id
            )));
        }
        if !collections.contains_key(&m.domain) {
            return Err(BiLinkError::Referential(format!("no collection for domain {}", m.domain)));
        }
    }

    let batches_per_epoch = make_batches(mentions.len(), cfg.batch_size, cfg.seed, 0)?.len();
    if batches_per_epoch == 0 {
        return Err(BiLinkError::Config("mention list too small for one batch".into()));
    }
    let mut optimizer = AdamW::new(AdamWConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        warmup_steps: cfg.warmup_steps,
        total_steps: cfg.epochs * batches_per_epoch,
        ..AdamWConfig::default()
    });
    let trainable: BTreeSet<String> = store.trainable_el().into_iter().collect();

    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut global_step = 0u64;
    for epoch in 0..cfg.epochs {
        let batches = make_batches(mentions.len(), cfg.batch_size, cfg.seed, epoch as u64)?;
        let mut loss_sum = 0.0;
        for batch_local in &batches {
            let mut tape = Tape::new();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x5eed ^ global_step).wrapping_mul(0x9e3779b97f4a7c15));
            let mut embeddings: BTreeMap<String, NodeId> = BTreeMap::new();
            let mut items = Vec::with_capacity(batch_local.len());
            for &mi in batch_local {
                let m = &mentions[mi];
                let set = set_of[m.mention_id.as_str()];
                let coll = &collections[&m.domain];
                let mut candidates = Vec::with_capacity(set.candidates.len());
                for c in &set.candidates {
                    let key = qualified(&m.domain, &c.entity_id);
                    if !embeddings.contains_key(&key) {
                        let emb = encode_candidate_train(&mut tape, store, coll, &c.entity_id, &mut rng)?;
                        embeddings.insert(key.clone(), emb);
                    }
                    candidates.push(key);
                }
                let mention_emb = encode_mention_train(&mut tape, store, m, &mut rng)?;
                items.push(ElLossItem {
                    mention: mention_emb,
                    gold: qualified(&m.domain, set.gold_id()),
                    candidates,
                });
            }
            let loss = el_batch_loss(&mut tape, &items, &embeddings, cfg.temperature)?;
            let loss_val = tape.value(loss).scalar();
            if !loss_val.is_finite() {
                return Err(BiLinkError::Numeric(format!(
                    "non-finite loss {loss_val} at epoch {epoch} step {global_step}"
                )));
            }
            tape.backward(loss);
            let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
            for (name, g) in tape.param_grads() {
                if trainable.contains(name) {
                    grads.insert(name.to_string(), g.clone());
                }
            }
            optimizer.apply(&mut store.tensors, &grads);
            loss_sum += loss_val;
            global_step += 1;
        }
        let report = ElEpochReport {
            epoch,
            loss: loss_sum / batches.len() as f64,
            lr: optimizer.lr_at(optimizer.steps_taken()),
            seed: cfg.seed,
        };
        info!("el epoch {} loss={:.4} lr={:.2e}", report.epoch, report.loss, report.lr);
        reports.push(report);
    }
    Ok(reports)
}

/// Writes one JSON object per epoch, newline separated.
pub fn write_el_epoch_log(path: &std::path::Path, reports: &[ElEpochReport]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
