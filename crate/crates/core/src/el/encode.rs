//! Sequence layouts and pooled encodings for mentions and candidates.
//!
//! A mention is wrapped in the shared soft prompts: `[CLS] left SP_1..SP_p
//! mention SP_p+1..SP_2p right [SEP]`, pooled at `[CLS]`. When the contexts
//! overflow the budget they are trimmed symmetrically, always keeping the
//! tokens adjacent to the mention and never touching the mention itself.
//! A candidate document is `[CLS] scrubbed-body [SEP]`, pooled at `[CLS]`.

use rand_chacha::ChaCha8Rng;

use crate::el::bm25::DomainCollection;
use crate::el::io::{Document, MentionRecord};
use crate::encoder::{encode, encode_train, entity_plan, SeqPlan, TokenSource};
use crate::error::{BiLinkError, Result};
use crate::model::{EncoderSide, ParamStore};
use crate::nn::{NodeId, Tape};
use crate::text::{self, tokenize, Vocab};

/// Vocabulary over every document title and body plus every mention's
/// context and surface, keeping all tokens. Shared by training and
/// evaluation so checkpoints stay interchangeable.
pub fn corpus_vocab(documents: &[Document], mentions: &[MentionRecord]) -> Vocab {
    let mut texts = Vec::with_capacity(2 * documents.len() + 3 * mentions.len());
    for d in documents {
        texts.push(d.title.clone());
        texts.push(d.body.clone());
    }
    for m in mentions {
        texts.push(m.context_left.clone());
        texts.push(m.mention.clone());
        texts.push(m.context_right.clone());
    }
    Vocab::build(texts.iter().map(|s| s.as_str()), 1)
}

/// Lays out one mention with `p` soft prompt vectors on each side of the
/// span.
pub fn mention_plan(
    vocab: &Vocab,
    mention: &MentionRecord,
    p: usize,
    max_len: usize,
) -> Result<SeqPlan> {
    if p == 0 {
        return Err(BiLinkError::Config("soft prompt count must be positive".into()));
    }
    let span = vocab.encode(&tokenize(&mention.mention));
    if span.is_empty() {
        return Err(BiLinkError::InputLayout(format!(
            "mention {} has no tokens",
            mention.mention_id
        )));
    }
    let fixed = 2 + 2 * p + span.len();
    if fixed > max_len {
        return Err(BiLinkError::InputLayout(format!(
            "mention {} needs {fixed} positions but max_len is {max_len}",
            mention.mention_id
        )));
    }
    let left = vocab.encode(&tokenize(&mention.context_left));
    let right = vocab.encode(&tokenize(&mention.context_right));
    let room = max_len - fixed;
    let mut l_keep = left.len().min(room / 2 + room % 2);
    let r_keep = right.len().min(room - l_keep);
    l_keep = left.len().min(room - r_keep);

    let mut sources = Vec::with_capacity(fixed + l_keep + r_keep);
    sources.push(TokenSource::Vocab(text::CLS));
    sources.extend(left[left.len() - l_keep..].iter().map(|&id| TokenSource::Vocab(id)));
    sources.extend((0..p).map(TokenSource::SoftPrompt));
    sources.extend(span.iter().map(|&id| TokenSource::Vocab(id)));
    sources.extend((p..2 * p).map(TokenSource::SoftPrompt));
    sources.extend(right[..r_keep].iter().map(|&id| TokenSource::Vocab(id)));
    sources.push(TokenSource::Vocab(text::SEP));
    Ok(SeqPlan { sources, pool_at: 0 })
}

/// Lays out one candidate document from its scrubbed body.
pub fn candidate_plan(vocab: &Vocab, scrubbed_body: &[String], max_len: usize) -> Result<SeqPlan> {
    entity_plan(vocab, scrubbed_body, max_len)
}

/// Pooled mention embedding, evaluation mode.
pub fn encode_mention(
    tape: &mut Tape,
    store: &ParamStore,
    mention: &MentionRecord,
) -> Result<NodeId> {
    let plan = mention_plan(&store.vocab, mention, store.config.soft_prompt_len, store.config.max_len)?;
    Ok(encode(tape, store, EncoderSide::Expression, &plan))
}

/// Pooled mention embedding with training-mode dropout.
pub fn encode_mention_train(
    tape: &mut Tape,
    store: &ParamStore,
    mention: &MentionRecord,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId> {
    let plan = mention_plan(&store.vocab, mention, store.config.soft_prompt_len, store.config.max_len)?;
    Ok(encode_train(tape, store, EncoderSide::Expression, &plan, rng))
}

/// Pooled candidate embedding from the collection's scrubbed body.
pub fn encode_candidate(
    tape: &mut Tape,
    store: &ParamStore,
    collection: &DomainCollection,
    entity_id: &str,
) -> Result<NodeId> {
    let plan = candidate_plan(&store.vocab, collection.scrubbed_body_of(entity_id)?, store.config.max_len)?;
    Ok(encode(tape, store, EncoderSide::Entity, &plan))
}

/// Pooled candidate embedding with training-mode dropout.
pub fn encode_candidate_train(
    tape: &mut Tape,
    store: &ParamStore,
    collection: &DomainCollection,
    entity_id: &str,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId> {
    let plan = candidate_plan(&store.vocab, collection.scrubbed_body_of(entity_id)?, store.config.max_len)?;
    Ok(encode_train(tape, store, EncoderSide::Entity, &plan, rng))
}
