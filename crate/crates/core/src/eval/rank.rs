//! Two-pass self-ensembled scoring.
//!
//! The first pass scores a single denoised query expression against every
//! index entry. The second pass re-encodes only the top-K candidates in the
//! opposite direction and scores them against the known entity's
//! description; everything outside the top K keeps a second-pass score of
//! zero. Encodings are memoized, so candidates shared between queries are
//! re-encoded once.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::encoder::{encode, entity_plan, expression_plan};
use crate::error::{BiLinkError, Result};
use crate::eval::index::EmbeddingIndex;
use crate::graph::{prepare_description, Graph};
use crate::model::{EncoderSide, ParamStore};
use crate::nn::Tape;
use crate::prompt::{select_template, verbalize, Direction, GmmState, PromptRuleBase};
use crate::train::{cosine_sim, denoise};

/// One ranking task: predict the entity completing `(known, relation, ?)`
/// (forward) or `(?, relation, known)` (backward). The filter holds other
/// known-true completions; it never contains the gold.
#[derive(Debug, Clone)]
pub struct Query {
    pub direction: Direction,
    pub known: usize,
    pub relation: usize,
    pub gold: usize,
    pub filter: BTreeSet<usize>,
}

impl Query {
    pub fn new(
        direction: Direction,
        known: usize,
        relation: usize,
        gold: usize,
        mut filter: BTreeSet<usize>,
    ) -> Query {
        filter.remove(&gold);
        Query { direction, known, relation, gold, filter }
    }

    /// Stable identifier for per-query dumps.
    pub fn key(&self) -> String {
        let d = match self.direction {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        };
        format!("{d}:{}:{}", self.known, self.relation)
    }
}

/// Memoizing encoder frontend for evaluation. Template picks, denoised
/// expressions, bare-template offsets, and description embeddings are each
/// computed once per key against a frozen parameter store.
pub struct Scorer<'a> {
    store: &'a ParamStore,
    graph: &'a Graph,
    rules: &'a PromptRuleBase,
    gmm: Option<&'a GmmState>,
    t: f64,
    desc_tokens: usize,
    pick_cache: HashMap<(usize, usize, Direction), String>,
    expr_cache: HashMap<(usize, usize, Direction), Vec<f64>>,
    desc_cache: HashMap<usize, Vec<f64>>,
    tau_cache: HashMap<(String, Direction), Vec<f64>>,
}

impl<'a> Scorer<'a> {
    pub fn new(
        store: &'a ParamStore,
        graph: &'a Graph,
        rules: &'a PromptRuleBase,
        gmm: Option<&'a GmmState>,
        t: f64,
        desc_tokens: usize,
    ) -> Result<Scorer<'a>> {
        if !(t > 0.0) {
            return Err(BiLinkError::Numeric(format!(
                "temperature must be positive, got {t}"
            )));
        }
        Ok(Scorer {
            store,
            graph,
            rules,
            gmm,
            t,
            desc_tokens,
            pick_cache: HashMap::new(),
            expr_cache: HashMap::new(),
            desc_cache: HashMap::new(),
            tau_cache: HashMap::new(),
        })
    }

    pub fn temperature(&self) -> f64 {
        self.t
    }

    fn check_entity(&self, entity: usize) -> Result<()> {
        if entity >= self.graph.entity_count() {
            return Err(BiLinkError::Referential(format!(
                "entity index {entity} out of range for a graph with {} entities",
                self.graph.entity_count()
            )));
        }
        Ok(())
    }

    fn pick_template(
        &mut self,
        entity: usize,
        relation: usize,
        direction: Direction,
    ) -> Result<String> {
        let key = (entity, relation, direction);
        if let Some(id) = self.pick_cache.get(&key) {
            return Ok(id.clone());
        }
        let id = match self.gmm {
            Some(state) if self.rules.len() > 1 => {
                select_template(state, self.store, self.graph, entity, relation, self.rules, direction)?
                    .id
                    .clone()
            }
            _ => self.rules.templates[0].id.clone(),
        };
        self.pick_cache.insert(key, id.clone());
        Ok(id)
    }

    fn tau(&mut self, template_id: &str, direction: Direction) -> Result<Vec<f64>> {
        let key = (template_id.to_string(), direction);
        if let Some(v) = self.tau_cache.get(&key) {
            return Ok(v.clone());
        }
        let tpl = self.rules.require(template_id)?;
        let bare = verbalize(tpl, direction, "[PAD]");
        let plan = expression_plan(&self.store.vocab, &bare, &[], self.store.config.max_len)?;
        let mut tape = Tape::new();
        let node = encode(&mut tape, self.store, EncoderSide::Expression, &plan);
        let v = tape.value(node).data.clone();
        self.tau_cache.insert(key, v.clone());
        Ok(v)
    }

    /// Relational expression for `(entity, relation)` in the given direction,
    /// with the bare-template offset subtracted.
    pub fn denoised_expression(
        &mut self,
        entity: usize,
        relation: usize,
        direction: Direction,
    ) -> Result<Vec<f64>> {
        self.check_entity(entity)?;
        if relation >= self.graph.relation_count() {
            return Err(BiLinkError::Referential(format!(
                "relation index {relation} out of range for a graph with {} relations",
                self.graph.relation_count()
            )));
        }
        let key = (entity, relation, direction);
        if let Some(v) = self.expr_cache.get(&key) {
            return Ok(v.clone());
        }
        let tpl_id = self.pick_template(entity, relation, direction)?;
        let tpl = self.rules.require(&tpl_id)?;
        let surface = &self.graph.relation(relation).surface;
        let expr = verbalize(tpl, direction, surface);
        let desc = prepare_description(self.graph, entity, self.desc_tokens);
        let plan = expression_plan(&self.store.vocab, &expr, &desc, self.store.config.max_len)?;
        let mut tape = Tape::new();
        let node = encode(&mut tape, self.store, EncoderSide::Expression, &plan);
        let raw = tape.value(node).data.clone();
        let tau = self.tau(&tpl_id, direction)?;
        let v = denoise(&raw, &tau);
        self.expr_cache.insert(key, v.clone());
        Ok(v)
    }

    /// Entity-side encoding of the entity's description.
    pub fn description_embedding(&mut self, entity: usize) -> Result<Vec<f64>> {
        self.check_entity(entity)?;
        if let Some(v) = self.desc_cache.get(&entity) {
            return Ok(v.clone());
        }
        let desc = prepare_description(self.graph, entity, self.desc_tokens);
        let plan = entity_plan(&self.store.vocab, &desc, self.store.config.max_len)?;
        let mut tape = Tape::new();
        let node = encode(&mut tape, self.store, EncoderSide::Entity, &plan);
        let v = tape.value(node).data.clone();
        self.desc_cache.insert(entity, v.clone());
        Ok(v)
    }
}

/// First-pass scores: scaled cosine between one query expression and every
/// index entry. No re-encoding happens here.
pub fn sp1_scores(
    query: &[f64],
    index: &EmbeddingIndex,
    t: f64,
) -> Result<BTreeMap<usize, f64>> {
    if index.is_empty() {
        return Err(BiLinkError::Eval("embedding index is empty".into()));
    }
    let mut out = BTreeMap::new();
    for (e, v) in index.iter() {
        out.insert(e, cosine_sim(query, v, t)?);
    }
    Ok(out)
}

/// Highest-scoring `k` entities, ties resolved toward the lower id.
pub fn top_k(scores: &BTreeMap<usize, f64>, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(BiLinkError::Config("top-K must be at least 1".into()));
    }
    let mut rows: Vec<(usize, f64)> = scores.iter().map(|(&e, &s)| (e, s)).collect();
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(rows.into_iter().take(k).map(|(e, _)| e).collect())
}

/// Second-pass scores for the shortlisted candidates only. Each candidate is
/// re-encoded as the expression that would predict the known entity and
/// scored against that entity's description embedding. Entities absent from
/// the result implicitly score zero.
pub fn sp2_rescore(
    scorer: &mut Scorer,
    query: &Query,
    shortlist: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    let target = scorer.description_embedding(query.known)?;
    let t = scorer.temperature();
    let mut out = BTreeMap::new();
    for &c in shortlist {
        let expr = scorer.denoised_expression(c, query.relation, query.direction.flip())?;
        out.insert(c, cosine_sim(&expr, &target, t)?);
    }
    Ok(out)
}

/// `sp1 + w * sp2` over the first-pass domain; missing second-pass entries
/// count as zero.
pub fn ensemble(
    sp1: &BTreeMap<usize, f64>,
    sp2: &BTreeMap<usize, f64>,
    w: f64,
) -> Result<BTreeMap<usize, f64>> {
    if !(w >= 0.0) {
        return Err(BiLinkError::Config(format!(
            "ensemble weight must be non-negative, got {w}"
        )));
    }
    Ok(sp1
        .iter()
        .map(|(&e, &s)| (e, s + w * sp2.get(&e).copied().unwrap_or(0.0)))
        .collect())
}
