//! Train/valid/test split construction.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{BiLinkError, Result};
use crate::graph::{Graph, SplitMode, SplitSet};

fn check_ratios(ratios: (f64, f64, f64)) -> Result<()> {
    let (a, b, c) = ratios;
    if !(a > 0.0) || b < 0.0 || c < 0.0 {
        return Err(BiLinkError::Config(
            "split ratios must be non-negative with a positive train share".into(),
        ));
    }
    if (a + b + c - 1.0).abs() > 1e-9 {
        return Err(BiLinkError::Config(format!(
            "split ratios must sum to 1, got {}",
            a + b + c
        )));
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` into three shares.
fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    let raw = [ratios.0 * n as f64, ratios.1 * n as f64, ratios.2 * n as f64];
    let mut sizes = [raw[0] as usize, raw[1] as usize, raw[2] as usize];
    let mut rem: Vec<(f64, usize)> = raw
        .iter()
        .enumerate()
        .map(|(i, r)| (r - r.floor(), i))
        .collect();
    rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut left = n - sizes.iter().sum::<usize>();
    for (_, i) in rem {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    (sizes[0], sizes[1], sizes[2])
}

/// Splits triples so that every entity mentioned in valid or test also occurs
/// in at least one training triple. Assignment is greedy over a seeded
/// shuffle: a triple may leave the training pool only while both of its
/// endpoints keep at least one other covering triple.
pub fn split_transductive(
    graph: &Graph,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitSet> {
    check_ratios(ratios)?;
    let n = graph.triple_count();
    if n == 0 {
        return Err(BiLinkError::InfeasibleSplit("graph has no triples".into()));
    }
    let (_, n_valid, n_test) = split_sizes(n, ratios);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    // support[e] = number of triples still in the train pool covering e.
    let mut support = vec![0usize; graph.entity_count()];
    for t in graph.triples() {
        support[t.head] += 1;
        if t.tail != t.head {
            support[t.tail] += 1;
        }
    }

    let mut assigned = vec![false; n];
    let take = |quota: usize, assigned: &mut Vec<bool>, support: &mut Vec<usize>| {
        let mut picked = Vec::with_capacity(quota);
        for &i in &order {
            if picked.len() == quota {
                break;
            }
            if assigned[i] {
                continue;
            }
            let t = graph.triples()[i];
            let ok = if t.head == t.tail {
                support[t.head] >= 2
            } else {
                support[t.head] >= 2 && support[t.tail] >= 2
            };
            if ok {
                assigned[i] = true;
                support[t.head] -= 1;
                if t.tail != t.head {
                    support[t.tail] -= 1;
                }
                picked.push(i);
            }
        }
        picked
    };

    let mut valid = take(n_valid, &mut assigned, &mut support);
    let mut test = take(n_test, &mut assigned, &mut support);
    if valid.len() < n_valid || test.len() < n_test {
        return Err(BiLinkError::InfeasibleSplit(format!(
            "could only withdraw {}/{} valid and {}/{} test triples while keeping \
             every entity covered by training data",
            valid.len(),
            n_valid,
            test.len(),
            n_test
        )));
    }
    let mut train: Vec<usize> = (0..n).filter(|&i| !assigned[i]).collect();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();

    Ok(SplitSet {
        mode: SplitMode::Transductive,
        seed,
        train,
        valid,
        test,
        eval_graph: None,
    })
}

/// Fractions of the evaluation subgraph's triples reserved as valid and test
/// queries; the remainder stays observable context.
const INDUCTIVE_VALID_FRACTION: f64 = 0.1;
const INDUCTIVE_TEST_FRACTION: f64 = 0.1;

/// Holds out a fraction of entities and induces two entity-disjoint graphs:
/// triples crossing the partition are dropped. Valid/test indices refer to
/// the evaluation graph; its remaining triples act as observed context.
pub fn split_inductive(graph: &Graph, holdout_fraction: f64, seed: u64) -> Result<SplitSet> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(BiLinkError::Config(format!(
            "holdout fraction must lie in (0, 1), got {holdout_fraction}"
        )));
    }
    let nv = graph.entity_count();
    if nv < 2 {
        return Err(BiLinkError::InfeasibleSplit(
            "need at least two entities to hold some out".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..nv).collect();
    order.shuffle(&mut rng);
    let k = ((holdout_fraction * nv as f64).round() as usize).clamp(1, nv - 1);
    let held: HashSet<usize> = order[..k].iter().copied().collect();

    let mut train = Vec::new();
    let mut eval_triples = Vec::new();
    let mut dropped = 0usize;
    for (i, t) in graph.triples().iter().enumerate() {
        match (held.contains(&t.head), held.contains(&t.tail)) {
            (true, true) => eval_triples.push(*t),
            (false, false) => train.push(i),
            _ => dropped += 1,
        }
    }
    log::info!(
        "inductive split: {} train, {} eval, {} crossing triples dropped",
        train.len(),
        eval_triples.len(),
        dropped
    );
    if train.is_empty() || eval_triples.is_empty() {
        return Err(BiLinkError::InfeasibleSplit(format!(
            "entity holdout left {} training and {} evaluation triples",
            train.len(),
            eval_triples.len()
        )));
    }

    let eval_graph = induce(graph, &eval_triples)?;

    let train_rels: HashSet<usize> = train
        .iter()
        .map(|&i| graph.triples()[i].relation)
        .collect();
    let train_rel_ids: HashSet<&str> = train_rels
        .iter()
        .map(|&r| graph.relation(r).id.as_str())
        .collect();
    if !eval_graph
        .relations()
        .iter()
        .any(|r| train_rel_ids.contains(r.id.as_str()))
    {
        return Err(BiLinkError::InfeasibleSplit(
            "train and evaluation subgraphs share no relation".into(),
        ));
    }

    let m = eval_graph.triple_count();
    let mut eval_order: Vec<usize> = (0..m).collect();
    eval_order.shuffle(&mut rng);
    let n_test = ((INDUCTIVE_TEST_FRACTION * m as f64).round() as usize).clamp(1, m);
    let n_valid = ((INDUCTIVE_VALID_FRACTION * m as f64).round() as usize).min(m - n_test);
    let mut test: Vec<usize> = eval_order[..n_test].to_vec();
    let mut valid: Vec<usize> = eval_order[n_test..n_test + n_valid].to_vec();
    test.sort_unstable();
    valid.sort_unstable();

    Ok(SplitSet {
        mode: SplitMode::Inductive,
        seed,
        train,
        valid,
        test,
        eval_graph: Some(eval_graph),
    })
}

/// Builds the subgraph with exactly the given triples, keeping only entities
/// and relations they mention.
pub fn induce(graph: &Graph, triples: &[crate::graph::Triple]) -> Result<Graph> {
    let mut ent_keep: Vec<usize> = triples
        .iter()
        .flat_map(|t| [t.head, t.tail])
        .collect();
    ent_keep.sort_unstable();
    ent_keep.dedup();
    let mut rel_keep: Vec<usize> = triples.iter().map(|t| t.relation).collect();
    rel_keep.sort_unstable();
    rel_keep.dedup();

    let ent_map: std::collections::HashMap<usize, usize> = ent_keep
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new))
        .collect();
    let rel_map: std::collections::HashMap<usize, usize> = rel_keep
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new))
        .collect();

    let entities = ent_keep
        .iter()
        .map(|&i| graph.entity(i).clone())
        .collect();
    let relations = rel_keep
        .iter()
        .map(|&i| graph.relation(i).clone())
        .collect();
    let new_triples = triples
        .iter()
        .map(|t| crate::graph::Triple {
            head: ent_map[&t.head],
            relation: rel_map[&t.relation],
            tail: ent_map[&t.tail],
        })
        .collect();
    Graph::new(entities, relations, new_triples)
}
