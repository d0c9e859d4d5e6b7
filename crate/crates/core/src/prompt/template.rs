//! Reversible prompt templates and the rule base that holds them.
//!
//! A template owns one forward text (with a `[TMARK]` slot for the unknown
//! tail) and one backward text (with `[HMARK]` for the unknown head); both
//! carry a `{REL}` slot filled with the relation's surface form at
//! verbalization time.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BiLinkError, Result};
use crate::graph::Graph;
use crate::text::{self, tokenize};

pub const REL_SLOT: &str = "{REL}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn marker(self) -> &'static str {
        match self {
            Direction::Forward => "[TMARK]",
            Direction::Backward => "[HMARK]",
        }
    }

    pub fn marker_id(self) -> usize {
        match self {
            Direction::Forward => text::TMARK,
            Direction::Backward => text::HMARK,
        }
    }

    pub fn flip(self) -> Direction {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    #[serde(default)]
    pub syntax_tag: String,
    pub forward: String,
    pub backward: String,
}

impl PromptTemplate {
    pub fn text(&self, direction: Direction) -> &str {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(BiLinkError::Config("template id must be nonempty".into()));
        }
        for (dir, marker, other) in [
            (Direction::Forward, "[TMARK]", "[HMARK]"),
            (Direction::Backward, "[HMARK]", "[TMARK]"),
        ] {
            let chunks: Vec<&str> = self.text(dir).split_whitespace().collect();
            let markers = chunks.iter().filter(|c| **c == marker).count();
            let strays = chunks.iter().filter(|c| **c == other).count();
            let rels = chunks.iter().filter(|c| **c == REL_SLOT).count();
            if markers != 1 || strays != 0 {
                return Err(BiLinkError::Config(format!(
                    "template {} {:?} text must contain {marker} exactly once",
                    self.id, dir
                )));
            }
            if rels != 1 {
                return Err(BiLinkError::Config(format!(
                    "template {} {:?} text must contain {REL_SLOT} exactly once",
                    self.id, dir
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRuleBase {
    pub templates: Vec<PromptTemplate>,
}

impl PromptRuleBase {
    pub fn new(templates: Vec<PromptTemplate>) -> Result<Self> {
        if templates.is_empty() {
            return Err(BiLinkError::Config("rule base needs at least one template".into()));
        }
        for (i, t) in templates.iter().enumerate() {
            t.validate()?;
            if templates[..i].iter().any(|o| o.id == t.id) {
                return Err(BiLinkError::Config(format!("duplicate template id {}", t.id)));
            }
        }
        Ok(PromptRuleBase { templates })
    }

    /// Minimal rule base: bare relation text next to the marker.
    pub fn single_default() -> Self {
        PromptRuleBase {
            templates: vec![PromptTemplate {
                id: "t0".into(),
                syntax_tag: String::new(),
                forward: "{REL} [TMARK]".into(),
                backward: "[HMARK] {REL}".into(),
            }],
        }
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }

    pub fn require(&self, id: &str) -> Result<&PromptTemplate> {
        self.get(id)
            .ok_or_else(|| BiLinkError::Referential(format!("unknown template id {id}")))
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// Expands one direction of a template into tokens: `{REL}` becomes the
/// tokenized relation surface, the marker survives as a single token.
pub fn verbalize(template: &PromptTemplate, direction: Direction, relation_surface: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in template.text(direction).split_whitespace() {
        if chunk == REL_SLOT {
            out.extend(tokenize(relation_surface));
        } else {
            out.extend(tokenize(chunk));
        }
    }
    out
}

/// Tokens identifying the known side of an edge for the template embedder:
/// entity name and relation surface in reading order for the direction.
pub fn edge_tokens(graph: &Graph, entity: usize, relation: usize, direction: Direction) -> Vec<String> {
    let name = tokenize(&graph.entity(entity).name);
    let rel = tokenize(&graph.relation(relation).surface);
    match direction {
        Direction::Forward => name.into_iter().chain(rel).collect(),
        Direction::Backward => rel.into_iter().chain(name).collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleBaseFile {
    templates: Vec<PromptTemplate>,
}

pub fn load_rule_base(path: &Path) -> Result<PromptRuleBase> {
    let text = fs::read_to_string(path)?;
    let file: RuleBaseFile = serde_json::from_str(&text).map_err(|e| BiLinkError::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    PromptRuleBase::new(file.templates)
}

pub fn save_rule_base(path: &Path, rules: &PromptRuleBase) -> Result<()> {
    let file = RuleBaseFile {
        templates: rules.templates.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Seed annotations: specific edges labeled with the template that fits
/// them, keyed by graph-local triple indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedLabel {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub template_id: String,
}

/// Reads tab-separated `head relation tail template_id` rows against a
/// specific graph and rule base.
pub fn load_seed_labels(path: &Path, graph: &Graph, rules: &PromptRuleBase) -> Result<Vec<SeedLabel>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 || cols.iter().any(|c| c.trim().is_empty()) {
            return Err(BiLinkError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: "expected 4 tab-separated columns".into(),
            });
        }
        let resolve = |id: &str| {
            graph
                .entity_idx(id)
                .ok_or_else(|| BiLinkError::Referential(format!("unknown entity {id} in seed labels")))
        };
        let head = resolve(cols[0])?;
        let relation = graph
            .relation_idx(cols[1])
            .ok_or_else(|| BiLinkError::Referential(format!("unknown relation {} in seed labels", cols[1])))?;
        let tail = resolve(cols[2])?;
        rules.require(cols[3])?;
        out.push(SeedLabel {
            head,
            relation,
            tail,
            template_id: cols[3].to_string(),
        });
    }
    if out.is_empty() {
        return Err(BiLinkError::Config(format!(
            "seed label file {} holds no labels",
            path.display()
        )));
    }
    Ok(out)
}

pub fn save_seed_labels(path: &Path, graph: &Graph, labels: &[SeedLabel]) -> Result<()> {
    let mut text = String::new();
    for l in labels {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            graph.entity(l.head).id,
            graph.relation(l.relation).id,
            graph.entity(l.tail).id,
            l.template_id
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Count of labels per template id, in id order.
pub fn label_histogram(labels: &[SeedLabel]) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for l in labels {
        *h.entry(l.template_id.clone()).or_insert(0) += 1;
    }
    h
}
