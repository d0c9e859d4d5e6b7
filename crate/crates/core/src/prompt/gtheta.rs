//! The shallow frozen expression embedder behind template selection.
//!
//! An (edge tokens ++ verbalized template) sequence is embedded with the
//! dedicated `g.*` tables, mean-pooled, and pushed through a two-layer tanh
//! MLP down to a low-dimensional vector. The weights are drawn once at
//! initialization and never trained, so the embedding is a stable hash-like
//! signature that the mixture model clusters.

use crate::error::{BiLinkError, Result};
use crate::graph::Graph;
use crate::model::ParamStore;
use crate::nn::tensor::Tensor;
use crate::prompt::template::{edge_tokens, verbalize, Direction, PromptTemplate};

/// Low-dimensional embedding of one (edge, template, direction) triple.
pub fn embed_expression(
    store: &ParamStore,
    graph: &Graph,
    entity: usize,
    relation: usize,
    template: &PromptTemplate,
    direction: Direction,
) -> Result<Vec<f64>> {
    if entity >= graph.entity_count() {
        return Err(BiLinkError::Referential(format!(
            "entity index {entity} out of range"
        )));
    }
    if relation >= graph.relation_count() {
        return Err(BiLinkError::Referential(format!(
            "relation index {relation} out of range"
        )));
    }
    let mut tokens = edge_tokens(graph, entity, relation, direction);
    tokens.extend(verbalize(
        template,
        direction,
        &graph.relation(relation).surface,
    ));
    Ok(embed_tokens(store, &tokens))
}

/// Embeds an arbitrary token sequence with the frozen tables.
pub fn embed_tokens(store: &ParamStore, tokens: &[String]) -> Vec<f64> {
    let c = &store.config;
    let tok_emb = store.get("g.tok_emb");
    let pos_emb = store.get("g.pos_emb");
    let ids = store.vocab.encode(tokens);
    let n = ids.len().min(c.max_len).max(1);
    let mut pooled = vec![0.0; c.gtheta_dim];
    if ids.is_empty() {
        // An empty sequence pools to the zero vector before the MLP.
    } else {
        for (pos, &id) in ids.iter().take(n).enumerate() {
            for (j, p) in pooled.iter_mut().enumerate() {
                *p += tok_emb.get(id, j) + pos_emb.get(pos, j);
            }
        }
        for p in pooled.iter_mut() {
            *p /= n as f64;
        }
    }
    let h = affine_tanh(&pooled, store.get("g.w1"), store.get("g.b1"));
    affine(&h, store.get("g.w2"), store.get("g.b2"))
}

fn affine_tanh(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    affine(x, w, b).into_iter().map(f64::tanh).collect()
}

fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    assert_eq!(x.len(), w.rows);
    let mut out = b.data.clone();
    for (i, &xi) in x.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += xi * w.get(i, j);
        }
    }
    out
}
