//! End-to-end ranking evaluation over a held-out split.
//!
//! Every held-out triple becomes two queries, one per direction. Candidates
//! are all entities of the evaluation graph; known-true completions from any
//! split are filtered before ranking. Reported metrics are the per-direction
//! aggregates and their mean.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BiLinkError, Result};
use crate::eval::index::EmbeddingIndex;
use crate::eval::metrics::{filtered_rank, metrics, RankingMetrics};
use crate::eval::rank::{ensemble, sp1_scores, sp2_rescore, top_k, Query, Scorer};
use crate::graph::{Graph, SplitSet, Triple};
use crate::model::ParamStore;
use crate::prompt::{Direction, GmmState, PromptRuleBase};

/// Knobs for the ranking protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Shortlist size for the second pass.
    pub k: usize,
    /// Weight of the second-pass score in the ensemble.
    pub w: f64,
    /// Cosine temperature.
    pub temperature: f64,
    /// Description truncation for query and candidate texts.
    pub desc_tokens: usize,
    /// Fold incident relational embeddings into the index before scoring.
    pub posthoc: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 50,
            w: 0.5,
            temperature: 0.05,
            desc_tokens: 16,
            posthoc: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(BiLinkError::Config("top-K must be at least 1".into()));
        }
        if !(self.w >= 0.0) {
            return Err(BiLinkError::Config(format!(
                "ensemble weight must be non-negative, got {}",
                self.w
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(BiLinkError::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Which held-out portion to query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Valid,
    Test,
}

impl EvalSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalSplit::Valid => "valid",
            EvalSplit::Test => "test",
        }
    }
}

/// One resolved query: its dump key, gold entity, and final rank.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub key: String,
    pub gold: usize,
    pub rank: usize,
}

/// Per-direction and averaged metrics plus the raw per-query ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub forward: RankingMetrics,
    pub backward: RankingMetrics,
    pub mean: RankingMetrics,
    pub forward_queries: Vec<QueryRecord>,
    pub backward_queries: Vec<QueryRecord>,
}

/// One line of the JSON evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub direction: String,
    #[serde(rename = "MRR")]
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
    pub config_hash: String,
}

/// Builds the two directed queries for one held-out triple, with filters
/// drawn from the precomputed completion maps.
fn queries_for(
    triple: &Triple,
    tails_of: &HashMap<(usize, usize), BTreeSet<usize>>,
    heads_of: &HashMap<(usize, usize), BTreeSet<usize>>,
) -> (Query, Query) {
    let fwd_filter = tails_of
        .get(&(triple.head, triple.relation))
        .cloned()
        .unwrap_or_default();
    let bwd_filter = heads_of
        .get(&(triple.tail, triple.relation))
        .cloned()
        .unwrap_or_default();
    let fwd = Query::new(
        Direction::Forward,
        triple.head,
        triple.relation,
        triple.tail,
        fwd_filter,
    );
    let bwd = Query::new(
        Direction::Backward,
        triple.tail,
        triple.relation,
        triple.head,
        bwd_filter,
    );
    (fwd, bwd)
}

/// Completion maps over the known-true triples.
fn completion_maps(
    filter_base: &[Triple],
) -> (
    HashMap<(usize, usize), BTreeSet<usize>>,
    HashMap<(usize, usize), BTreeSet<usize>>,
) {
    let mut tails_of: HashMap<(usize, usize), BTreeSet<usize>> = HashMap::new();
    let mut heads_of: HashMap<(usize, usize), BTreeSet<usize>> = HashMap::new();
    for t in filter_base {
        tails_of.entry((t.head, t.relation)).or_default().insert(t.tail);
        heads_of.entry((t.tail, t.relation)).or_default().insert(t.head);
    }
    (tails_of, heads_of)
}

fn rank_one(
    scorer: &mut Scorer,
    index: &EmbeddingIndex,
    query: &Query,
    cfg: &EvalConfig,
) -> Result<QueryRecord> {
    let expr = scorer.denoised_expression(query.known, query.relation, query.direction)?;
    let sp1 = sp1_scores(&expr, index, cfg.temperature)?;
    let sp2 = if cfg.w == 0.0 {
        BTreeMap::new()
    } else {
        let shortlist = top_k(&sp1, cfg.k)?;
        sp2_rescore(scorer, query, &shortlist)?
    };
    let final_scores = ensemble(&sp1, &sp2, cfg.w)?;
    let rank = filtered_rank(&final_scores, query.gold, &query.filter)?;
    Ok(QueryRecord { key: query.key(), gold: query.gold, rank })
}

/// Scores every held-out triple in both directions against a prebuilt index.
pub(crate) fn run(
    scorer: &mut Scorer,
    index: &EmbeddingIndex,
    held_out: &[Triple],
    filter_base: &[Triple],
    cfg: &EvalConfig,
) -> Result<EvalOutcome> {
    if held_out.is_empty() {
        return Err(BiLinkError::Eval("no queries in the chosen split".into()));
    }
    let (tails_of, heads_of) = completion_maps(filter_base);
    let mut forward_queries = Vec::with_capacity(held_out.len());
    let mut backward_queries = Vec::with_capacity(held_out.len());
    for t in held_out {
        let (fq, bq) = queries_for(t, &tails_of, &heads_of);
        forward_queries.push(rank_one(scorer, index, &fq, cfg)?);
        backward_queries.push(rank_one(scorer, index, &bq, cfg)?);
    }
    let fwd_ranks: Vec<usize> = forward_queries.iter().map(|r| r.rank).collect();
    let bwd_ranks: Vec<usize> = backward_queries.iter().map(|r| r.rank).collect();
    let forward = metrics(&fwd_ranks)?;
    let backward = metrics(&bwd_ranks)?;
    let mean = RankingMetrics::average(&forward, &backward);
    mean.check()?;
    Ok(EvalOutcome { forward, backward, mean, forward_queries, backward_queries })
}

/// Evaluates a trained store on the valid or test portion of a split.
///
/// For an inductive split the candidate pool, queries, and filters all live
/// in the entity-disjoint evaluation graph; otherwise the source graph is
/// used. With `posthoc` set, every entity that heads an observed (non-held-
/// out) edge first has the backward expressions of those edges averaged
/// into its index entry.
pub fn evaluate(
    store: &ParamStore,
    graph: &Graph,
    splits: &SplitSet,
    which: EvalSplit,
    rules: &PromptRuleBase,
    gmm: Option<&GmmState>,
    cfg: &EvalConfig,
) -> Result<EvalOutcome> {
    cfg.validate()?;
    let eg: &Graph = splits.eval_graph.as_ref().unwrap_or(graph);
    let idxs = match which {
        EvalSplit::Valid => &splits.valid,
        EvalSplit::Test => &splits.test,
    };
    for &i in idxs {
        if i >= eg.triple_count() {
            return Err(BiLinkError::Referential(format!(
                "split index {i} out of range for an evaluation graph with {} triples",
                eg.triple_count()
            )));
        }
    }
    let held_out: Vec<Triple> = idxs.iter().map(|&i| eg.triples()[i]).collect();

    let mut scorer = Scorer::new(store, eg, rules, gmm, cfg.temperature, cfg.desc_tokens)?;
    let mut index = EmbeddingIndex::build(store, eg, cfg.desc_tokens)?;
    if cfg.posthoc {
        let held: BTreeSet<usize> = splits.valid.iter().chain(&splits.test).copied().collect();
        let mut incoming: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
        for (i, t) in eg.triples().iter().enumerate() {
            if held.contains(&i) {
                continue;
            }
            let expr = scorer.denoised_expression(t.tail, t.relation, Direction::Backward)?;
            incoming.entry(t.head).or_default().push(expr);
        }
        for (e, vs) in incoming {
            index.posthoc_update(e, vs)?;
        }
    }
    run(&mut scorer, &index, &held_out, eg.triples(), cfg)
}

/// Report rows for the forward, backward, and averaged metrics.
pub fn eval_reports(outcome: &EvalOutcome, split: &str, config_hash: &str) -> Vec<EvalReport> {
    let row = |direction: &str, m: &RankingMetrics| EvalReport {
        split: split.to_string(),
        direction: direction.to_string(),
        mrr: m.mrr,
        hits1: m.hits1,
        hits3: m.hits3,
        hits10: m.hits10,
        n_queries: m.n_queries,
        config_hash: config_hash.to_string(),
    };
    vec![
        row("forward", &outcome.forward),
        row("backward", &outcome.backward),
        row("mean", &outcome.mean),
    ]
}

pub fn write_eval_reports(path: &Path, reports: &[EvalReport]) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(reports)?)?;
    Ok(())
}

/// Tab-separated per-query dump: key, gold entity, rank.
pub fn write_query_dump(path: &Path, records: &[QueryRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        writeln!(&mut out, "{}\t{}\t{}", r.key, r.gold, r.rank)?;
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{
        split_transductive, synth_kg, RelationPattern, RelationSpec, SynthSpec,
    };
    use crate::model::{ModelConfig, ParamStore};
    use crate::text::Vocab;

    fn toy_graph(entities: usize, density: f64, seed: u64) -> Graph {
        let spec = SynthSpec {
            entity_count: entities,
            relations: vec![
                RelationSpec {
                    id: "near".into(),
                    surface: Some("is near".into()),
                    pattern: RelationPattern::Symmetric,
                    density,
                },
                RelationSpec {
                    id: "feeds".into(),
                    surface: None,
                    pattern: RelationPattern::Plain,
                    density: density * 0.75,
                },
            ],
            seed,
            flavor_vocab: Vec::new(),
        };
        synth_kg(&spec).unwrap()
    }

    fn toy_store(graph: &Graph, seed: u64) -> ParamStore {
        let cfg = ModelConfig {
            layers: 1,
            heads: 2,
            dim: 16,
            ffn_dim: 32,
            max_len: 32,
            ..ModelConfig::default()
        };
        let mut texts: Vec<String> =
            graph.entities().iter().map(|e| e.description.clone()).collect();
        texts.extend(graph.relations().iter().map(|r| r.surface.clone()));
        let vocab = Vocab::build(texts.iter().map(|s| s.as_str()), 1);
        ParamStore::init(cfg, vocab, seed).unwrap()
    }

    #[test]
    fn filters_drop_other_true_completions() {
        let base = vec![
            Triple { head: 0, relation: 0, tail: 1 },
            Triple { head: 0, relation: 0, tail: 2 },
            Triple { head: 3, relation: 0, tail: 1 },
        ];
        let (tails_of, heads_of) = completion_maps(&base);
        let (fq, bq) = queries_for(&base[0], &tails_of, &heads_of);
        assert_eq!(fq.filter, [2].into_iter().collect());
        assert!(!fq.filter.contains(&fq.gold));
        assert_eq!(bq.filter, [3].into_iter().collect());
    }

    #[test]
    fn gold_matching_query_expression_ranks_first() {
        let g = toy_graph(6, 0.4, 3);
        let store = toy_store(&g, 3);
        let rules = PromptRuleBase::single_default();
        let t = g.triples()[0];
        let mut scorer = Scorer::new(&store, &g, &rules, None, 0.05, 8).unwrap();
        let fwd = scorer
            .denoised_expression(t.head, t.relation, Direction::Forward)
            .unwrap();
        let bwd = scorer
            .denoised_expression(t.tail, t.relation, Direction::Backward)
            .unwrap();
        let dim = fwd.len();
        let mut vectors = BTreeMap::new();
        for e in 0..g.entity_count() {
            let mut v = vec![0.0; dim];
            v[e % dim] = 1.0;
            vectors.insert(e, v);
        }
        vectors.insert(t.tail, fwd);
        vectors.insert(t.head, bwd);
        let index = EmbeddingIndex::from_vectors(vectors).unwrap();
        let cfg = EvalConfig { w: 0.0, ..EvalConfig::default() };
        let out = run(&mut scorer, &index, &[t], g.triples(), &cfg).unwrap();
        assert_eq!(out.forward.mrr, 1.0);
        assert_eq!(out.backward.mrr, 1.0);
        assert_eq!(out.mean.mrr, 1.0);
    }

    #[test]
    fn averaged_metrics_are_the_direction_means() {
        let g = toy_graph(12, 0.3, 7);
        let store = toy_store(&g, 7);
        let rules = PromptRuleBase::single_default();
        let splits = split_transductive(&g, (0.8, 0.1, 0.1), 7).unwrap();
        let cfg = EvalConfig { k: 5, desc_tokens: 8, ..EvalConfig::default() };
        let out =
            evaluate(&store, &g, &splits, EvalSplit::Test, &rules, None, &cfg).unwrap();
        let mean = RankingMetrics::average(&out.forward, &out.backward);
        assert_eq!(out.mean, mean);
        assert_eq!(out.forward_queries.len(), out.backward_queries.len());
        out.forward.check().unwrap();
        out.backward.check().unwrap();
    }

    #[test]
    fn untrained_encoder_ranks_roughly_uniformly() {
        let g = toy_graph(100, 0.08, 11);
        let store = toy_store(&g, 11);
        let rules = PromptRuleBase::single_default();
        let splits = split_transductive(&g, (0.8, 0.1, 0.1), 11).unwrap();
        let cfg = EvalConfig { k: 10, desc_tokens: 8, ..EvalConfig::default() };
        let out =
            evaluate(&store, &g, &splits, EvalSplit::Test, &rules, None, &cfg).unwrap();
        assert!(
            out.mean.hits10 < 0.3,
            "untrained hits@10 suspiciously high: {}",
            out.mean.hits10
        );
        assert!(out.mean.mrr < 0.2, "untrained mrr suspiciously high: {}", out.mean.mrr);
        assert!(out.mean.mrr > 0.0);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let g = toy_graph(14, 0.3, 5);
        let store = toy_store(&g, 5);
        let rules = PromptRuleBase::single_default();
        let splits = split_transductive(&g, (0.8, 0.1, 0.1), 5).unwrap();
        let cfg = EvalConfig { k: 5, desc_tokens: 8, ..EvalConfig::default() };
        let a = evaluate(&store, &g, &splits, EvalSplit::Test, &rules, None, &cfg).unwrap();
        let b = evaluate(&store, &g, &splits, EvalSplit::Test, &rules, None, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn posthoc_updates_change_only_context_headed_entries() {
        let g = toy_graph(12, 0.3, 9);
        let store = toy_store(&g, 9);
        let rules = PromptRuleBase::single_default();
        let splits = split_transductive(&g, (0.8, 0.1, 0.1), 9).unwrap();
        let plain = EvalConfig { k: 5, desc_tokens: 8, ..EvalConfig::default() };
        let updated = EvalConfig { posthoc: true, ..plain.clone() };
        let a = evaluate(&store, &g, &splits, EvalSplit::Test, &rules, None, &plain).unwrap();
        let b =
            evaluate(&store, &g, &splits, EvalSplit::Test, &rules, None, &updated).unwrap();
        assert_eq!(a.forward_queries.len(), b.forward_queries.len());
        let rerun =
            evaluate(&store, &g, &splits, EvalSplit::Test, &rules, None, &updated).unwrap();
        assert_eq!(b, rerun);
    }

    #[test]
    fn empty_split_rejected() {
        let g = toy_graph(12, 0.3, 5);
        let store = toy_store(&g, 5);
        let rules = PromptRuleBase::single_default();
        let mut splits = split_transductive(&g, (0.8, 0.1, 0.1), 5).unwrap();
        splits.test.clear();
        let err = evaluate(
            &store,
            &g,
            &splits,
            EvalSplit::Test,
            &rules,
            None,
            &EvalConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, BiLinkError::Eval(_)));
    }

    #[test]
    fn bad_config_values_rejected() {
        assert!(EvalConfig { k: 0, ..EvalConfig::default() }.validate().is_err());
        assert!(EvalConfig { w: -1.0, ..EvalConfig::default() }.validate().is_err());
        assert!(
            EvalConfig { temperature: 0.0, ..EvalConfig::default() }.validate().is_err()
        );
    }

    #[test]
    fn reports_and_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = metrics(&[1, 4]).unwrap();
        let outcome = EvalOutcome {
            forward: m.clone(),
            backward: m.clone(),
            mean: RankingMetrics::average(&m, &m),
            forward_queries: vec![QueryRecord {
                key: "forward:0:0".into(),
                gold: 1,
                rank: 4,
            }],
            backward_queries: Vec::new(),
        };
        let reports = eval_reports(&outcome, "test", "abc123");
        assert_eq!(reports.len(), 3);
        assert_eq!(reports[2].direction, "mean");
        let json_path = dir.path().join("report.json");
        write_eval_reports(&json_path, &reports).unwrap();
        let text = std::fs::read_to_string(&json_path).unwrap();
        assert!(text.contains("\"MRR\""));
        let back: Vec<EvalReport> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, reports);
        let tsv_path = dir.path().join("queries.tsv");
        write_query_dump(&tsv_path, &outcome.forward_queries).unwrap();
        assert_eq!(
            std::fs::read_to_string(&tsv_path).unwrap(),
            "forward:0:0\t1\t4\n"
        );
    }
}
