//! Transformer text encoder built on the autodiff tape.
//!
//! One call encodes one sequence; batching happens a level up by running
//! many calls and accumulating gradients. Padded positions are masked out of
//! attention with a large negative additive term, which zeroes them exactly
//! after softmax, so appending padding never changes any real row.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{BiLinkError, Result};
use crate::model::{EncoderSide, ParamStore};
use crate::nn::{NodeId, Tape, Tensor};
use crate::text::{self, Vocab};

const MASK_NEG: f64 = -1e30;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenSource {
    Vocab(usize),
    SoftPrompt(usize),
}

/// A fully laid-out input sequence: where each embedding row comes from and
/// which row is pooled as the sequence representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqPlan {
    pub sources: Vec<TokenSource>,
    pub pool_at: usize,
}

impl SeqPlan {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Lays out `[CLS] expression [SEP] description [SEP]`, pooling at the
/// single placeholder marker inside the expression. The description is
/// truncated to fit; the expression itself must fit or the layout fails.
pub fn expression_plan(
    vocab: &Vocab,
    expr_tokens: &[String],
    desc_tokens: &[String],
    max_len: usize,
) -> Result<SeqPlan> {
    let expr_ids = vocab.encode(expr_tokens);
    let fixed = expr_ids.len() + 2;
    if fixed + 1 > max_len {
        return Err(BiLinkError::InputLayout(format!(
            "expression of {} tokens cannot fit in max_len {}",
            expr_ids.len(),
            max_len
        )));
    }
    let markers: Vec<usize> = expr_ids
        .iter()
        .enumerate()
        .filter(|(_, &id)| id == text::HMARK || id == text::TMARK)
        .map(|(i, _)| i)
        .collect();
    if markers.len() != 1 {
        return Err(BiLinkError::InputLayout(format!(
            "expression must contain exactly one placeholder marker, found {}",
            markers.len()
        )));
    }
    let mut ids = Vec::with_capacity(max_len);
    ids.push(text::CLS);
    ids.extend(&expr_ids);
    ids.push(text::SEP);
    let room = max_len - ids.len() - 1;
    ids.extend(vocab.encode(desc_tokens).into_iter().take(room));
    ids.push(text::SEP);
    Ok(SeqPlan {
        sources: ids.into_iter().map(TokenSource::Vocab).collect(),
        pool_at: 1 + markers[0],
    })
}

/// Lays out `[CLS] description [SEP]`, pooled at `[CLS]`.
pub fn entity_plan(vocab: &Vocab, desc_tokens: &[String], max_len: usize) -> Result<SeqPlan> {
    if max_len < 3 {
        return Err(BiLinkError::InputLayout(
            "max_len too small for an entity sequence".into(),
        ));
    }
    let mut ids = Vec::with_capacity(max_len);
    ids.push(text::CLS);
    ids.extend(vocab.encode(desc_tokens).into_iter().take(max_len - 2));
    ids.push(text::SEP);
    Ok(SeqPlan {
        sources: ids.into_iter().map(TokenSource::Vocab).collect(),
        pool_at: 0,
    })
}

/// Final hidden states for every position, shape `[len, dim]`.
pub fn encoder_body(
    tape: &mut Tape,
    store: &ParamStore,
    side: EncoderSide,
    plan: &SeqPlan,
) -> NodeId {
    encoder_body_mode(tape, store, side, plan, None)
}

/// As `encoder_body`, applying dropout from `rng` when the config asks for
/// it; passing `None` is evaluation mode.
pub fn encoder_body_mode(
    tape: &mut Tape,
    store: &ParamStore,
    side: EncoderSide,
    plan: &SeqPlan,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> NodeId {
    let c = &store.config;
    let p = store.prefix(side);
    let n = plan.len();
    assert!(n > 0 && n <= c.max_len, "sequence length {n} out of range");
    assert!(plan.pool_at < n, "pool site out of range");

    let tok_emb = tape.param(&format!("{p}.tok_emb"), store.get(&format!("{p}.tok_emb")).clone());
    let pos_emb = tape.param(&format!("{p}.pos_emb"), store.get(&format!("{p}.pos_emb")).clone());
    let all_vocab = plan
        .sources
        .iter()
        .all(|s| matches!(s, TokenSource::Vocab(_)));
    let x0 = if all_vocab {
        let ids: Vec<usize> = plan
            .sources
            .iter()
            .map(|s| match s {
                TokenSource::Vocab(i) => *i,
                TokenSource::SoftPrompt(_) => unreachable!(),
            })
            .collect();
        tape.gather_rows(tok_emb, &ids)
    } else {
        let soft = tape.param("soft_prompts", store.get("soft_prompts").clone());
        let sources: Vec<(NodeId, usize)> = plan
            .sources
            .iter()
            .map(|s| match s {
                TokenSource::Vocab(i) => (tok_emb, *i),
                TokenSource::SoftPrompt(r) => (soft, *r),
            })
            .collect();
        tape.assemble_rows(&sources)
    };
    let positions: Vec<usize> = (0..n).collect();
    let pos_rows = tape.gather_rows(pos_emb, &positions);
    let summed = tape.add(x0, pos_rows);
    let g = tape.param(&format!("{p}.emb_ln.g"), store.get(&format!("{p}.emb_ln.g")).clone());
    let b = tape.param(&format!("{p}.emb_ln.b"), store.get(&format!("{p}.emb_ln.b")).clone());
    let mut x = tape.layer_norm(summed, g, b);

    let mask = attention_mask(plan);
    let mask = tape.constant(mask);
    let dh = c.dim / c.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    for l in 0..c.layers {
        let lp = format!("{p}.l{l}");
        let proj = |tape: &mut Tape, w: &str, bnm: &str, x: NodeId| {
            let w = tape.param(&format!("{lp}.attn.{w}"), store.get(&format!("{lp}.attn.{w}")).clone());
            let b = tape.param(&format!("{lp}.attn.{bnm}"), store.get(&format!("{lp}.attn.{bnm}")).clone());
            let y = tape.matmul(x, w);
            tape.add_row(y, b)
        };
        let q = proj(tape, "wq", "bq", x);
        let k = proj(tape, "wk", "bk", x);
        let v = proj(tape, "wv", "bv", x);
        let mut heads = Vec::with_capacity(c.heads);
        for h in 0..c.heads {
            let (s, e) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, s, e);
            let kh = tape.slice_cols(k, s, e);
            let vh = tape.slice_cols(v, s, e);
            let scores = tape.matmul_nt(qh, kh);
            let scaled = tape.scale(scores, scale);
            let masked = tape.add(scaled, mask);
            let probs = tape.softmax_rows(masked);
            heads.push(tape.matmul(probs, vh));
        }
        let ctx = tape.concat_cols(&heads);
        let wo = tape.param(&format!("{lp}.attn.wo"), store.get(&format!("{lp}.attn.wo")).clone());
        let bo = tape.param(&format!("{lp}.attn.bo"), store.get(&format!("{lp}.attn.bo")).clone());
        let attn = tape.matmul(ctx, wo);
        let attn = tape.add_row(attn, bo);
        let attn = apply_dropout(tape, attn, c.dropout, &mut dropout_rng);
        let res1 = tape.add(x, attn);
        let g1 = tape.param(&format!("{lp}.ln1.g"), store.get(&format!("{lp}.ln1.g")).clone());
        let b1n = tape.param(&format!("{lp}.ln1.b"), store.get(&format!("{lp}.ln1.b")).clone());
        x = tape.layer_norm(res1, g1, b1n);

        let w1 = tape.param(&format!("{lp}.ffn.w1"), store.get(&format!("{lp}.ffn.w1")).clone());
        let b1 = tape.param(&format!("{lp}.ffn.b1"), store.get(&format!("{lp}.ffn.b1")).clone());
        let w2 = tape.param(&format!("{lp}.ffn.w2"), store.get(&format!("{lp}.ffn.w2")).clone());
        let b2 = tape.param(&format!("{lp}.ffn.b2"), store.get(&format!("{lp}.ffn.b2")).clone());
        let h1 = tape.matmul(x, w1);
        let h1 = tape.add_row(h1, b1);
        let act = tape.gelu(h1);
        let h2 = tape.matmul(act, w2);
        let h2 = tape.add_row(h2, b2);
        let h2 = apply_dropout(tape, h2, c.dropout, &mut dropout_rng);
        let res2 = tape.add(x, h2);
        let g2 = tape.param(&format!("{lp}.ln2.g"), store.get(&format!("{lp}.ln2.g")).clone());
        let b2n = tape.param(&format!("{lp}.ln2.b"), store.get(&format!("{lp}.ln2.b")).clone());
        x = tape.layer_norm(res2, g2, b2n);
    }
    x
}

/// Pooled `[1, dim]` representation of the sequence, evaluation mode.
pub fn encode(tape: &mut Tape, store: &ParamStore, side: EncoderSide, plan: &SeqPlan) -> NodeId {
    let body = encoder_body(tape, store, side, plan);
    tape.slice_row(body, plan.pool_at)
}

/// Pooled representation with training-mode dropout driven by `rng`.
pub fn encode_train(
    tape: &mut Tape,
    store: &ParamStore,
    side: EncoderSide,
    plan: &SeqPlan,
    rng: &mut ChaCha8Rng,
) -> NodeId {
    let body = encoder_body_mode(tape, store, side, plan, Some(rng));
    tape.slice_row(body, plan.pool_at)
}

/// Per-position tag logits from the expression encoder, `[len, pos_tags]`.
pub fn pos_logits(tape: &mut Tape, store: &ParamStore, plan: &SeqPlan) -> NodeId {
    let body = encoder_body(tape, store, EncoderSide::Expression, plan);
    let w = tape.param("pos_head.w", store.get("pos_head.w").clone());
    let b = tape.param("pos_head.b", store.get("pos_head.b").clone());
    let logits = tape.matmul(body, w);
    tape.add_row(logits, b)
}

/// Mean cross-entropy over the given (position, tag) labels.
pub fn pos_loss(tape: &mut Tape, logits: NodeId, labels: &[(usize, usize)]) -> NodeId {
    assert!(!labels.is_empty(), "pos_loss needs at least one label");
    let mut terms = Vec::with_capacity(labels.len());
    for &(pos, tag) in labels {
        let row = tape.slice_row(logits, pos);
        let lse = tape.log_sum_exp(row);
        let gold = tape.slice_cols(row, tag, tag + 1);
        terms.push(tape.sub(lse, gold));
    }
    tape.mean_vars(&terms)
}

fn apply_dropout(
    tape: &mut Tape,
    x: NodeId,
    p: f64,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> NodeId {
    let Some(rng) = rng.as_deref_mut() else {
        return x;
    };
    if p <= 0.0 {
        return x;
    }
    let v = tape.value(x);
    let keep = 1.0 / (1.0 - p);
    let mask = Tensor::from_vec(
        v.rows,
        v.cols,
        (0..v.numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect(),
    );
    let mask = tape.constant(mask);
    tape.hadamard(x, mask)
}

fn attention_mask(plan: &SeqPlan) -> Tensor {
    let n = plan.len();
    let mut m = Tensor::zeros(n, n);
    for (j, s) in plan.sources.iter().enumerate() {
        if matches!(s, TokenSource::Vocab(id) if *id == text::PAD) {
            for i in 0..n {
                m.set(i, j, MASK_NEG);
            }
        }
    }
    m
}
