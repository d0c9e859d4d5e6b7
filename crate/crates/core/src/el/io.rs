//! Entity-linking file formats: mentions.jsonl, documents.jsonl,
//! candidates.jsonl. One JSON object per line in every file.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{BiLinkError, Result};

/// One mention in context, tied to its gold entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub mention_id: String,
    pub domain: String,
    pub context_left: String,
    pub mention: String,
    pub context_right: String,
    /// Gold entity the mention refers to.
    pub entity_id: String,
}

/// One entity document within a domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub entity_id: String,
    pub domain: String,
    pub title: String,
    pub body: String,
}

/// How a candidate earned its slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "bm25")]
    Bm25,
    #[serde(rename = "random-pad")]
    RandomPad,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub entity_id: String,
    pub provenance: Provenance,
}

/// Fixed-size candidate list for one mention, gold included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub mention_id: String,
    pub candidates: Vec<CandidateEntry>,
    pub gold_index: usize,
}

impl CandidateSet {
    pub fn gold_id(&self) -> &str {
        &self.candidates[self.gold_index].entity_id
    }

    /// Structural audit: exact length, gold in range, no duplicate entities.
    pub fn check(&self, k: usize) -> Result<()> {
        if self.candidates.len() != k {
            return Err(BiLinkError::Referential(format!(
                "candidate set for {} has {} entries, expected {k}",
                self.mention_id,
                self.candidates.len()
            )));
        }
        if self.gold_index >= self.candidates.len() {
            return Err(BiLinkError::Referential(format!(
                "gold index {} out of range for {}",
                self.gold_index, self.mention_id
            )));
        }
        let distinct: BTreeSet<&str> = self
            .candidates
            .iter()
            .map(|c| c.entity_id.as_str())
            .collect();
        if distinct.len() != self.candidates.len() {
            return Err(BiLinkError::Referential(format!(
                "candidate set for {} contains duplicate entities",
                self.mention_id
            )));
        }
        Ok(())
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: T = serde_json::from_str(&line).map_err(|e| BiLinkError::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_mentions(path: &Path) -> Result<Vec<MentionRecord>> {
    read_jsonl(path)
}

pub fn save_mentions(path: &Path, mentions: &[MentionRecord]) -> Result<()> {
    write_jsonl(path, mentions)
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    read_jsonl(path)
}

pub fn save_documents(path: &Path, documents: &[Document]) -> Result<()> {
    write_jsonl(path, documents)
}

pub fn load_candidate_sets(path: &Path) -> Result<Vec<CandidateSet>> {
    read_jsonl(path)
}

pub fn save_candidate_sets(path: &Path, sets: &[CandidateSet]) -> Result<()> {
    write_jsonl(path, sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn mention(id: &str) -> MentionRecord {
        MentionRecord {
            mention_id: id.into(),
            domain: "films".into(),
            context_left: "the acclaimed".into(),
            mention: "blue heron".into(),
            context_right: "premiered in spring".into(),
            entity_id: "e1".into(),
        }
    }

    #[test]
    fn mentions_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("mentions.jsonl");
        let items = vec![mention("m1"), mention("m2")];
        save_mentions(&path, &items).unwrap();
        assert_eq!(load_mentions(&path).unwrap(), items);
    }

    #[test]
    fn documents_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("documents.jsonl");
        let items = vec![Document {
            entity_id: "e1".into(),
            domain: "films".into(),
            title: "blue heron".into(),
            body: "a film about a bird".into(),
        }];
        save_documents(&path, &items).unwrap();
        assert_eq!(load_documents(&path).unwrap(), items);
    }

    #[test]
    fn candidate_sets_round_trip_with_stable_provenance_spelling() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("candidates.jsonl");
        let set = CandidateSet {
            mention_id: "m1".into(),
            candidates: vec![
                CandidateEntry { entity_id: "e1".into(), provenance: Provenance::Bm25 },
                CandidateEntry { entity_id: "e2".into(), provenance: Provenance::RandomPad },
            ],
            gold_index: 0,
        };
        save_candidate_sets(&path, &[set.clone()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"bm25\""));
        assert!(text.contains("\"random-pad\""));
        assert_eq!(load_candidate_sets(&path).unwrap(), vec![set]);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("mentions.jsonl");
        std::fs::write(&path, "{\"oops\": 1}\n").unwrap();
        match load_mentions(&path).unwrap_err() {
            BiLinkError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn candidate_audit_catches_structural_breaks() {
        let good = CandidateSet {
            mention_id: "m".into(),
            candidates: vec![
                CandidateEntry { entity_id: "a".into(), provenance: Provenance::Bm25 },
                CandidateEntry { entity_id: "b".into(), provenance: Provenance::RandomPad },
            ],
            gold_index: 1,
        };
        good.check(2).unwrap();
        assert_eq!(good.gold_id(), "b");
        assert!(good.check(3).is_err());
        let mut dup = good.clone();
        dup.candidates[1].entity_id = "a".into();
        assert!(dup.check(2).is_err());
        let mut oob = good;
        oob.gold_index = 5;
        assert!(oob.check(2).is_err());
    }
}
