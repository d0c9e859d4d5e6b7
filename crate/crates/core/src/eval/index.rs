//! Per-entity description embedding index for candidate scoring.

use std::collections::BTreeMap;

use crate::encoder::{encode, entity_plan};
use crate::model::EncoderSide;
use crate::error::{BiLinkError, Result};
use crate::graph::{prepare_description, Graph};
use crate::model::ParamStore;
use crate::nn::Tape;

/// Description embeddings for every candidate entity, plus the incident
/// relational embeddings folded in by post-hoc updates. Originals are kept
/// so updates recompute from scratch instead of compounding.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    dim: usize,
    originals: BTreeMap<usize, Vec<f64>>,
    neighbors: BTreeMap<usize, Vec<Vec<f64>>>,
    entries: BTreeMap<usize, Vec<f64>>,
}

impl EmbeddingIndex {
    /// Encodes every entity's description on the entity side.
    pub fn build(store: &ParamStore, graph: &Graph, desc_tokens: usize) -> Result<Self> {
        let mut vectors = BTreeMap::new();
        for e in 0..graph.entity_count() {
            let desc = prepare_description(graph, e, desc_tokens);
            let plan = entity_plan(&store.vocab, &desc, store.config.max_len)?;
            let mut tape = Tape::new();
            let node = encode(&mut tape, store, EncoderSide::Entity, &plan);
            vectors.insert(e, tape.value(node).data.clone());
        }
        Self::from_vectors(vectors)
    }

    /// Builds an index from precomputed vectors.
    pub fn from_vectors(vectors: BTreeMap<usize, Vec<f64>>) -> Result<Self> {
        let dim = match vectors.values().next() {
            Some(v) if !v.is_empty() => v.len(),
            _ => return Err(BiLinkError::Eval("embedding index is empty".into())),
        };
        for (e, v) in &vectors {
            if v.len() != dim {
                return Err(BiLinkError::Numeric(format!(
                    "entity {e} embedding has dimension {}, expected {dim}",
                    v.len()
                )));
            }
        }
        Ok(EmbeddingIndex {
            dim,
            originals: vectors.clone(),
            neighbors: BTreeMap::new(),
            entries: vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Current entry (post-hoc updates included).
    pub fn embedding(&self, entity: usize) -> Option<&[f64]> {
        self.entries.get(&entity).map(|v| v.as_slice())
    }

    /// The original description embedding, untouched by updates.
    pub fn original(&self, entity: usize) -> Option<&[f64]> {
        self.originals.get(&entity).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.entries.iter().map(|(&e, v)| (e, v.as_slice()))
    }

    /// Replaces the entity's stored neighbor set and recomputes its entry as
    /// the mean of the original embedding and all neighbors. An empty set
    /// leaves the entry untouched.
    pub fn posthoc_update(&mut self, entity: usize, incoming: Vec<Vec<f64>>) -> Result<()> {
        if !self.entries.contains_key(&entity) {
            return Err(BiLinkError::Referential(format!(
                "entity {entity} is not in the embedding index"
            )));
        }
        if incoming.is_empty() {
            return Ok(());
        }
        for v in &incoming {
            if v.len() != self.dim {
                return Err(BiLinkError::Numeric(format!(
                    "neighbor embedding has dimension {}, expected {}",
                    v.len(),
                    self.dim
                )));
            }
        }
        let original = &self.originals[&entity];
        let count = (incoming.len() + 1) as f64;
        let mut mean = original.clone();
        for v in &incoming {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        self.entries.insert(entity, mean);
        self.neighbors.insert(entity, incoming);
        Ok(())
    }
}
