//! Description preparation: length capping and neighbor-name padding.

use crate::graph::Graph;
use crate::text::{tokenize, Vocab};

/// Vocabulary over every entity description and relation surface of a
/// graph, keeping all tokens. Training and evaluation must build their
/// vocabulary the same way or checkpoints stop being interchangeable.
pub fn graph_vocab(graph: &Graph) -> Vocab {
    let mut texts: Vec<String> =
        graph.entities().iter().map(|e| e.description.clone()).collect();
    texts.extend(graph.relations().iter().map(|r| r.surface.clone()));
    Vocab::build(texts.iter().map(|s| s.as_str()), 1)
}

/// Tokenizes an entity's description, truncates it to the first `max_tokens`
/// tokens, and pads short (or empty) descriptions with neighbor entity names
/// in ascending (relation id, neighbor id) order until the limit is reached
/// or the neighbors run out.
///
/// A neighbor is skipped when its name tokens already occur contiguously in
/// the sequence, which makes the operation idempotent: preparing an
/// already-prepared description changes nothing.
pub fn prepare_description(graph: &Graph, entity: usize, max_tokens: usize) -> Vec<String> {
    let mut tokens = tokenize(&graph.entity(entity).description);
    tokens.truncate(max_tokens);

    if tokens.len() < max_tokens {
        let mut seen_neighbor = vec![false; graph.entity_count()];
        for &(_, nb) in graph.neighbors(entity) {
            if tokens.len() >= max_tokens {
                break;
            }
            if seen_neighbor[nb] {
                continue;
            }
            seen_neighbor[nb] = true;
            let name_tokens = tokenize(&graph.entity(nb).name);
            if name_tokens.is_empty() || contains_run(&tokens, &name_tokens) {
                continue;
            }
            let room = max_tokens - tokens.len();
            tokens.extend(name_tokens.into_iter().take(room));
        }
    }
    tokens
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && haystack
            .windows(needle.len())
            .any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityRecord, Graph, RelationRecord};

    fn graph_with(descs: &[(&str, &str, &str)], triples: &[(&str, &str, &str)]) -> Graph {
        let entities = descs
            .iter()
            .map(|(id, name, d)| EntityRecord {
                id: id.to_string(),
                name: name.to_string(),
                description: d.to_string(),
            })
            .collect();
        let mut relations: Vec<RelationRecord> = Vec::new();
        for (_, r, _) in triples {
            if !relations.iter().any(|rec| rec.id == *r) {
                relations.push(RelationRecord::from_id(r));
            }
        }
        let id_triples: Vec<_> = triples
            .iter()
            .map(|(h, r, t)| (h.to_string(), r.to_string(), t.to_string()))
            .collect();
        Graph::from_id_triples(entities, relations, &id_triples).unwrap()
    }

    #[test]
    fn truncates_to_prefix() {
        let g = graph_with(&[("a", "a", "one two three four five")], &[]);
        assert_eq!(prepare_description(&g, 0, 3), vec!["one", "two", "three"]);
    }

    #[test]
    fn graph_vocab_keeps_description_and_surface_tokens() {
        let g = graph_with(
            &[("a", "a", "amber gate"), ("b", "b", "silver gate")],
            &[("a", "guards", "b")],
        );
        let vocab = graph_vocab(&g);
        for token in ["amber", "silver", "gate", "guards"] {
            assert!(vocab.contains(token), "missing {token}");
        }
        assert_eq!(vocab.tokens(), graph_vocab(&g).tokens());
    }

    #[test]
    fn empty_description_padded_with_neighbor_names() {
        let g = graph_with(
            &[("x", "x", ""), ("n1", "alpha", ""), ("n2", "beta", "")],
            &[("x", "r", "n1"), ("x", "r", "n2")],
        );
        assert_eq!(prepare_description(&g, 0, 64), vec!["alpha", "beta"]);
    }

    #[test]
    fn padding_respects_relation_then_neighbor_order() {
        let g = graph_with(
            &[("x", "x", ""), ("b", "bee", ""), ("a", "ay", ""), ("z", "zed", "")],
            &[("x", "r2", "b"), ("x", "r1", "z"), ("a", "r2", "x")],
        );
        // r1 sorts before r2; within r2, entity id "a" sorts before "b".
        assert_eq!(prepare_description(&g, 0, 64), vec!["zed", "ay", "bee"]);
    }

    #[test]
    fn padding_stops_exactly_at_limit() {
        let desc = (0..60).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let g = graph_with(
            &[("x", "x", desc.as_str()), ("n", "gamma delta epsilon zeta", "")],
            &[("x", "r", "n")],
        );
        let out = prepare_description(&g, 0, 64);
        assert_eq!(out.len(), 64);
        assert_eq!(&out[60..], ["gamma", "delta", "epsilon", "zeta"]);
    }

    #[test]
    fn partial_name_is_cut_at_limit() {
        let desc = (0..62).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let g = graph_with(
            &[("x", "x", desc.as_str()), ("n", "gamma delta epsilon zeta", "")],
            &[("x", "r", "n")],
        );
        let out = prepare_description(&g, 0, 64);
        assert_eq!(out.len(), 64);
        assert_eq!(&out[62..], ["gamma", "delta"]);
    }

    #[test]
    fn idempotent_on_prepared_output() {
        let g = graph_with(
            &[("x", "x", "short text"), ("n1", "alpha", ""), ("n2", "beta", "")],
            &[("x", "r", "n1"), ("n2", "r", "x")],
        );
        let once = prepare_description(&g, 0, 64);
        let g2 = graph_with(
            &[("x", "x", once.join(" ").as_str()), ("n1", "alpha", ""), ("n2", "beta", "")],
            &[("x", "r", "n1"), ("n2", "r", "x")],
        );
        let twice = prepare_description(&g2, 0, 64);
        assert_eq!(once, twice);
    }

    #[test]
    fn long_description_unchanged_by_neighbors() {
        let desc = (0..70).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let g = graph_with(
            &[("x", "x", desc.as_str()), ("n", "alpha", "")],
            &[("x", "r", "n")],
        );
        let out = prepare_description(&g, 0, 64);
        assert_eq!(out.len(), 64);
        assert_eq!(out[0], "w0");
        assert!(!out.contains(&"alpha".to_string()));
    }
}
