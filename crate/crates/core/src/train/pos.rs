//! Part-of-speech pretraining over entity descriptions.
//!
//! Descriptions are tagged by a closed rule set, then the expression
//! encoder learns to predict the tags through its token-level head. The
//! stage is optional; the main contrastive loop works on a fresh encoder.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{entity_plan, pos_logits, SeqPlan};
use crate::error::{BiLinkError, Result};
use crate::graph::DEFAULT_FLAVORS;
use crate::graph::Graph;
use crate::model::ParamStore;
use crate::nn::{AdamW, AdamWConfig, Tape, Tensor};
use crate::text;

pub const POS_TAG_NAMES: [&str; 6] = ["noun", "verb", "adj", "num", "punct", "other"];

/// Deterministic rule-based tag for one token.
pub fn tag_token(token: &str) -> usize {
    if token.chars().count() == 1 && token.chars().all(|c| c.is_ascii_punctuation()) {
        return 4;
    }
    if !token.is_empty() && token.chars().all(|c| c.is_ascii_digit()) {
        return 3;
    }
    if matches!(token, "is" | "are" | "was" | "has") {
        return 1;
    }
    if DEFAULT_FLAVORS.contains(&token) {
        return 2;
    }
    if text::is_special(token) {
        return 5;
    }
    0
}

pub fn tag_tokens(tokens: &[String]) -> Vec<usize> {
    tokens.iter().map(|t| tag_token(t)).collect()
}

/// Tokenized descriptions of every entity, paired with rule tags.
pub fn description_corpus(graph: &Graph) -> Vec<(Vec<String>, Vec<usize>)> {
    graph
        .entities()
        .iter()
        .map(|e| {
            let tokens = text::tokenize(&e.description);
            let tags = tag_tokens(&tokens);
            (tokens, tags)
        })
        .collect()
}

/// Lays out one tagged sequence as `[CLS] tokens [SEP]` with labels on the
/// token positions. Tokens beyond the window are dropped together with
/// their tags.
pub fn pos_example(
    store: &ParamStore,
    tokens: &[String],
    tags: &[usize],
) -> Result<(SeqPlan, Vec<(usize, usize)>)> {
    if tokens.len() != tags.len() {
        return Err(BiLinkError::Batch(format!(
            "{} tokens but {} tags",
            tokens.len(),
            tags.len()
        )));
    }
    if let Some(bad) = tags.iter().find(|&&t| t >= store.config.pos_tags) {
        return Err(BiLinkError::Batch(format!(
            "tag id {bad} out of range for {} tags",
            store.config.pos_tags
        )));
    }
    let keep = tokens.len().min(store.config.max_len - 2);
    let plan = entity_plan(&store.vocab, &tokens[..keep], store.config.max_len)?;
    let labels: Vec<(usize, usize)> = (0..keep).map(|i| (i + 1, tags[i])).collect();
    Ok((plan, labels))
}

/// Mean cross-entropy over every labeled position in the batch, with
/// gradients for the encoder and tag head. A batch with no labeled
/// positions yields loss 0 and no gradients.
pub fn pos_step(
    store: &ParamStore,
    batch: &[(SeqPlan, Vec<(usize, usize)>)],
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let mut tape = Tape::new();
    let mut terms = Vec::new();
    for (plan, labels) in batch {
        if labels.is_empty() {
            continue;
        }
        let logits = pos_logits(&mut tape, store, plan);
        for &(pos, tag) in labels {
            let row = tape.slice_row(logits, pos);
            let lse = tape.log_sum_exp(row);
            let gold = tape.slice_cols(row, tag, tag + 1);
            terms.push(tape.sub(lse, gold));
        }
    }
    if terms.is_empty() {
        return Ok((0.0, BTreeMap::new()));
    }
    let loss = tape.mean_vars(&terms);
    tape.backward(loss);
    let value = tape.value(loss).scalar();
    if !value.is_finite() {
        return Err(BiLinkError::Numeric(format!("tagging loss became {value}")));
    }
    let grads = tape
        .param_grads()
        .map(|(k, g)| (k.to_string(), g.clone()))
        .collect();
    Ok((value, grads))
}

#[derive(Debug, Clone)]
pub struct PosTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: AdamWConfig,
    pub seed: u64,
}

impl Default for PosTrainConfig {
    fn default() -> Self {
        PosTrainConfig {
            epochs: 5,
            batch_size: 16,
            optim: AdamWConfig::default(),
            seed: 0,
        }
    }
}

/// Runs the tagging stage in place and returns the per-epoch mean losses.
pub fn pos_pretrain(
    store: &mut ParamStore,
    corpus: &[(Vec<String>, Vec<usize>)],
    cfg: &PosTrainConfig,
) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(BiLinkError::Config("tagging corpus is empty".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(BiLinkError::Config("epochs and batch size must be positive".into()));
    }
    let examples: Vec<(SeqPlan, Vec<(usize, usize)>)> = corpus
        .iter()
        .map(|(tokens, tags)| pos_example(store, tokens, tags))
        .collect::<Result<_>>()?;
    let steps_per_epoch = examples.len().div_ceil(cfg.batch_size);
    let mut optim_cfg = cfg.optim.clone();
    optim_cfg.total_steps = cfg.epochs * steps_per_epoch;
    let mut optimizer = AdamW::new(optim_cfg);
    let trainable: std::collections::BTreeSet<String> =
        store.trainable_pos().into_iter().collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut counted = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(SeqPlan, Vec<(usize, usize)>)> =
                chunk.iter().map(|&i| examples[i].clone()).collect();
            let (loss, grads) = pos_step(store, &batch)?;
            if grads.is_empty() {
                continue;
            }
            let grads: BTreeMap<String, Tensor> = grads
                .into_iter()
                .filter(|(k, _)| trainable.contains(k))
                .collect();
            optimizer.apply(&mut store.tensors, &grads);
            total += loss;
            counted += 1;
        }
        epoch_losses.push(if counted == 0 { 0.0 } else { total / counted as f64 });
    }
    Ok(epoch_losses)
}
