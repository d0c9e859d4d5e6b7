//! Per-domain document store with Okapi BM25 statistics.
//!
//! Retrieval scores run over the raw title + body tokens. Alongside the
//! index the collection keeps a scrubbed copy of every body in which each
//! occurrence of any in-domain title becomes a single `[UNK]`, so downstream
//! encoders never see an entity name in a candidate document.

use std::collections::HashMap;

use crate::el::io::Document;
use crate::error::{BiLinkError, Result};
use crate::text::{self, tokenize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(BiLinkError::Config(format!("bm25 k1 must be finite and >= 0, got {}", self.k1)));
        }
        if !(self.b.is_finite() && (0.0..=1.0).contains(&self.b)) {
            return Err(BiLinkError::Config(format!("bm25 b must lie in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Replaces every occurrence of any pattern (a non-empty token sequence)
/// with a single `[UNK]`. Longer patterns win at a shared start position.
pub fn scrub_tokens(body: &[String], patterns: &[Vec<String>]) -> Vec<String> {
    let mut live: Vec<&Vec<String>> = patterns.iter().filter(|p| !p.is_empty()).collect();
    live.sort_by_key(|p| std::cmp::Reverse(p.len()));
    let mut out = Vec::with_capacity(body.len());
    let mut i = 0;
    while i < body.len() {
        let hit = live.iter().find(|p| body[i..].starts_with(p));
        match hit {
            Some(p) => {
                out.push(text::SPECIAL_TOKENS[text::UNK].to_string());
                i += p.len();
            }
            None => {
                out.push(body[i].clone());
                i += 1;
            }
        }
    }
    out
}

/// All documents of one domain plus the immutable corpus statistics BM25
/// needs: document count, per-term document frequency, average length.
#[derive(Debug, Clone)]
pub struct DomainCollection {
    domain: String,
    docs: Vec<Document>,
    by_entity: HashMap<String, usize>,
    index_tokens: Vec<Vec<String>>,
    scrubbed: Vec<Vec<String>>,
    df: HashMap<String, usize>,
    avgdl: f64,
}

impl DomainCollection {
    pub fn build(domain: &str, docs: Vec<Document>) -> Result<DomainCollection> {
        if docs.is_empty() {
            return Err(BiLinkError::Config(format!("domain {domain} has no documents")));
        }
        let mut by_entity = HashMap::new();
        for (i, d) in docs.iter().enumerate() {
            if d.domain != domain {
                return Err(BiLinkError::Referential(format!(
                    "document {} belongs to domain {}, not {domain}",
                    d.entity_id, d.domain
                )));
            }
            if by_entity.insert(d.entity_id.clone(), i).is_some() {
                return Err(BiLinkError::Referential(format!(
                    "duplicate entity id {} in domain {domain}",
                    d.entity_id
                )));
            }
        }
        let index_tokens: Vec<Vec<String>> = docs
            .iter()
            .map(|d| {
                let mut toks = tokenize(&d.title);
                toks.extend(tokenize(&d.body));
                toks
            })
            .collect();
        let titles: Vec<Vec<String>> = docs.iter().map(|d| tokenize(&d.title)).collect();
        let scrubbed = docs
            .iter()
            .map(|d| scrub_tokens(&tokenize(&d.body), &titles))
            .collect();
        let mut df = HashMap::new();
        for toks in &index_tokens {
            let mut seen: Vec<&String> = toks.iter().collect();
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let total: usize = index_tokens.iter().map(Vec::len).sum();
        let avgdl = total as f64 / docs.len() as f64;
        Ok(DomainCollection { domain: domain.to_string(), docs, by_entity, index_tokens, scrubbed, df, avgdl })
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn doc(&self, idx: usize) -> &Document {
        &self.docs[idx]
    }

    pub fn doc_index(&self, entity_id: &str) -> Option<usize> {
        self.by_entity.get(entity_id).copied()
    }

    /// Body tokens with every in-domain title replaced by `[UNK]`.
    pub fn scrubbed_body(&self, idx: usize) -> &[String] {
        &self.scrubbed[idx]
    }

    pub fn scrubbed_body_of(&self, entity_id: &str) -> Result<&[String]> {
        let idx = self.require(entity_id)?;
        Ok(&self.scrubbed[idx])
    }

    fn require(&self, entity_id: &str) -> Result<usize> {
        self.doc_index(entity_id).ok_or_else(|| {
            BiLinkError::Referential(format!("no document {entity_id} in domain {}", self.domain))
        })
    }

    /// Okapi BM25 score of one document against a tokenized query. Query
    /// terms absent from the document contribute nothing; duplicated query
    /// terms count once per duplicate.
    pub fn bm25_score(&self, query: &[String], entity_id: &str, params: &Bm25Params) -> Result<f64> {
        params.validate()?;
        let idx = self.require(entity_id)?;
        Ok(self.score_idx(query, idx, params))
    }

    fn score_idx(&self, query: &[String], idx: usize, params: &Bm25Params) -> f64 {
        let toks = &self.index_tokens[idx];
        let dl = toks.len() as f64;
        let n = self.docs.len() as f64;
        let mut score = 0.0;
        for q in query {
            let tf = toks.iter().filter(|t| *t == q).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = *self.df.get(q).unwrap_or(&0) as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let denom = tf + params.k1 * (1.0 - params.b + params.b * dl / self.avgdl);
            score += idf * tf * (params.k1 + 1.0) / denom;
        }
        score
    }

    /// Document indices with positive score, best first; ties break toward
    /// the lower index so retrieval order is reproducible.
    pub fn retrieve(&self, query: &[String], params: &Bm25Params) -> Result<Vec<(usize, f64)>> {
        params.validate()?;
        let mut hits: Vec<(usize, f64)> = (0..self.docs.len())
            .map(|i| (i, self.score_idx(query, i, params)))
            .filter(|&(_, s)| s > 0.0)
            .collect();
        hits.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        Ok(hits)
    }
}
