//! Knowledge-graph storage: entities with text, relations, triples, splits.

mod describe;
mod io;
mod split;
mod synth;

pub use describe::{graph_vocab, prepare_description};
pub use io::{load_entities, load_graph, load_splits, load_triples, save_graph, save_splits};
pub use split::{split_inductive, split_transductive};
pub use synth::{synth_kg, RelationPattern, RelationSpec, SynthSpec, DEFAULT_FLAVORS};

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{BiLinkError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct EntityRecord {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationRecord {
    pub id: String,
    /// Text used when a relation is verbalized; defaults to the id with
    /// underscores replaced by spaces.
    pub surface: String,
}

impl RelationRecord {
    pub fn from_id(id: &str) -> RelationRecord {
        RelationRecord {
            id: id.to_string(),
            surface: id.replace('_', " "),
        }
    }
}

/// Directed labeled edge, stored as indices into the owning [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

#[derive(Debug, Clone)]
pub struct Graph {
    entities: Vec<EntityRecord>,
    relations: Vec<RelationRecord>,
    triples: Vec<Triple>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
    /// Per entity: distinct (relation, neighbor) pairs over incident edges in
    /// either direction, sorted ascending by (relation id, neighbor id).
    neighbors: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    pub fn new(
        entities: Vec<EntityRecord>,
        relations: Vec<RelationRecord>,
        triples: Vec<Triple>,
    ) -> Result<Graph> {
        let mut entity_index = HashMap::new();
        for (i, e) in entities.iter().enumerate() {
            if e.id.is_empty() {
                return Err(BiLinkError::Referential("empty entity id".into()));
            }
            if e.name.is_empty() {
                return Err(BiLinkError::Referential(format!(
                    "entity {} has an empty name",
                    e.id
                )));
            }
            if entity_index.insert(e.id.clone(), i).is_some() {
                return Err(BiLinkError::Referential(format!(
                    "duplicate entity id {}",
                    e.id
                )));
            }
        }
        let mut relation_index = HashMap::new();
        for (i, r) in relations.iter().enumerate() {
            if relation_index.insert(r.id.clone(), i).is_some() {
                return Err(BiLinkError::Referential(format!(
                    "duplicate relation id {}",
                    r.id
                )));
            }
        }
        let mut seen = HashSet::with_capacity(triples.len());
        for t in &triples {
            if t.head >= entities.len() || t.tail >= entities.len() {
                return Err(BiLinkError::Referential(format!(
                    "triple references entity index out of range: {:?}",
                    t
                )));
            }
            if t.relation >= relations.len() {
                return Err(BiLinkError::Referential(format!(
                    "triple references relation index out of range: {:?}",
                    t
                )));
            }
            if !seen.insert(*t) {
                return Err(BiLinkError::Referential(format!(
                    "duplicate triple ({}, {}, {})",
                    entities[t.head].id, relations[t.relation].id, entities[t.tail].id
                )));
            }
        }

        let mut neighbors: Vec<Vec<(usize, usize)>> = vec![Vec::new(); entities.len()];
        for t in &triples {
            neighbors[t.head].push((t.relation, t.tail));
            if t.head != t.tail {
                neighbors[t.tail].push((t.relation, t.head));
            }
        }
        for (_, list) in neighbors.iter_mut().enumerate() {
            list.sort_by(|a, b| {
                (relations[a.0].id.as_str(), entities[a.1].id.as_str())
                    .cmp(&(relations[b.0].id.as_str(), entities[b.1].id.as_str()))
            });
            list.dedup();
        }

        Ok(Graph {
            entities,
            relations,
            triples,
            entity_index,
            relation_index,
            neighbors,
        })
    }

    /// Builds a graph from string-keyed triples, failing on dangling ids.
    pub fn from_id_triples(
        entities: Vec<EntityRecord>,
        relations: Vec<RelationRecord>,
        id_triples: &[(String, String, String)],
    ) -> Result<Graph> {
        let entity_index: HashMap<&str, usize> = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect();
        let relation_index: HashMap<&str, usize> = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let mut triples = Vec::with_capacity(id_triples.len());
        for (h, r, t) in id_triples {
            let head = *entity_index.get(h.as_str()).ok_or_else(|| {
                BiLinkError::Referential(format!("triple references unknown entity {h}"))
            })?;
            let tail = *entity_index.get(t.as_str()).ok_or_else(|| {
                BiLinkError::Referential(format!("triple references unknown entity {t}"))
            })?;
            let relation = *relation_index.get(r.as_str()).ok_or_else(|| {
                BiLinkError::Referential(format!("triple references unknown relation {r}"))
            })?;
            triples.push(Triple {
                head,
                relation,
                tail,
            });
        }
        Graph::new(entities, relations, triples)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn entities(&self) -> &[EntityRecord] {
        &self.entities
    }

    pub fn relations(&self) -> &[RelationRecord] {
        &self.relations
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity(&self, idx: usize) -> &EntityRecord {
        &self.entities[idx]
    }

    pub fn relation(&self, idx: usize) -> &RelationRecord {
        &self.relations[idx]
    }

    pub fn entity_idx(&self, id: &str) -> Option<usize> {
        self.entity_index.get(id).copied()
    }

    pub fn relation_idx(&self, id: &str) -> Option<usize> {
        self.relation_index.get(id).copied()
    }

    /// Distinct (relation, neighbor) pairs incident to an entity, ascending
    /// by (relation id, neighbor id).
    pub fn neighbors(&self, entity: usize) -> &[(usize, usize)] {
        &self.neighbors[entity]
    }

    pub fn contains_triple(&self, head: usize, relation: usize, tail: usize) -> bool {
        self.triples.iter().any(|t| {
            t.head == head && t.relation == relation && t.tail == tail
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Transductive,
    Inductive,
}

/// Triple-index partition of a graph. Transductive splits index into the
/// source graph; inductive splits carry a disjoint-entity evaluation graph
/// whose triples the valid/test indices refer to.
#[derive(Debug, Clone)]
pub struct SplitSet {
    pub mode: SplitMode,
    pub seed: u64,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub eval_graph: Option<Graph>,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn entity(id: &str) -> EntityRecord {
        EntityRecord {
            id: id.into(),
            name: id.into(),
            description: String::new(),
        }
    }

    fn tiny() -> Graph {
        Graph::from_id_triples(
            vec![entity("a"), entity("b"), entity("c")],
            vec![
                RelationRecord::from_id("likes"),
                RelationRecord::from_id("near_to"),
            ],
            &[
                ("a".into(), "likes".into(), "b".into()),
                ("b".into(), "near_to".into(), "c".into()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn counts_are_consistent() {
        let g = tiny();
        assert_eq!(g.entity_count(), 3);
        assert_eq!(g.relation_count(), 2);
        assert_eq!(g.triple_count(), 2);
    }

    #[test]
    fn surface_defaults_replace_underscores() {
        assert_eq!(RelationRecord::from_id("near_to").surface, "near to");
    }

    #[test]
    fn duplicate_triple_rejected() {
        let err = Graph::from_id_triples(
            vec![entity("a"), entity("b")],
            vec![RelationRecord::from_id("r")],
            &[
                ("a".into(), "r".into(), "b".into()),
                ("a".into(), "r".into(), "b".into()),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, BiLinkError::Referential(_)));
    }

    #[test]
    fn dangling_reference_rejected() {
        let err = Graph::from_id_triples(
            vec![entity("a")],
            vec![RelationRecord::from_id("r")],
            &[("a".into(), "r".into(), "ghost".into())],
        )
        .unwrap_err();
        assert!(matches!(err, BiLinkError::Referential(_)));
    }

    #[test]
    fn empty_name_rejected() {
        let err = Graph::new(
            vec![EntityRecord {
                id: "a".into(),
                name: String::new(),
                description: String::new(),
            }],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, BiLinkError::Referential(_)));
    }

    #[test]
    fn neighbors_sorted_by_relation_then_entity_id() {
        let g = Graph::from_id_triples(
            vec![entity("a"), entity("b"), entity("c")],
            vec![
                RelationRecord::from_id("zz"),
                RelationRecord::from_id("aa"),
            ],
            &[
                ("a".into(), "zz".into(), "b".into()),
                ("c".into(), "aa".into(), "a".into()),
            ],
        )
        .unwrap();
        let aa = g.relation_idx("aa").unwrap();
        let zz = g.relation_idx("zz").unwrap();
        let c = g.entity_idx("c").unwrap();
        let b = g.entity_idx("b").unwrap();
        assert_eq!(g.neighbors(0), &[(aa, c), (zz, b)]);
    }

    #[test]
    fn neighbor_list_dedups_bidirectional_edges() {
        let g = Graph::from_id_triples(
            vec![entity("a"), entity("b")],
            vec![RelationRecord::from_id("r")],
            &[
                ("a".into(), "r".into(), "b".into()),
                ("b".into(), "r".into(), "a".into()),
            ],
        )
        .unwrap();
        assert_eq!(g.neighbors(0).len(), 1);
        assert_eq!(g.neighbors(1).len(), 1);
    }
}
