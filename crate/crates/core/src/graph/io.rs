//! File formats: entities.jsonl, triples.tsv, splits.json.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BiLinkError, Result};
use crate::graph::{EntityRecord, Graph, RelationRecord, SplitMode, SplitSet};

/// One JSON object per line: `{"id": ..., "name": ..., "description": ...}`.
pub fn load_entities(path: &Path) -> Result<Vec<EntityRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EntityRecord = serde_json::from_str(&line).map_err(|e| BiLinkError::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Tab-separated `head relation tail`, one triple per line.
pub fn load_triples(path: &Path) -> Result<Vec<(String, String, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 || cols.iter().any(|c| c.is_empty()) {
            return Err(BiLinkError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected 3 tab-separated columns, got {}", cols.len()),
            });
        }
        out.push((cols[0].into(), cols[1].into(), cols[2].into()));
    }
    Ok(out)
}

/// Loads a graph from an entity file and a triple file. Relations are
/// discovered from the triples in first-appearance order and given default
/// surface text.
pub fn load_graph(entities_path: &Path, triples_path: &Path) -> Result<Graph> {
    let entities = load_entities(entities_path)?;
    let triples = load_triples(triples_path)?;
    let mut relations: Vec<RelationRecord> = Vec::new();
    for (_, r, _) in &triples {
        if !relations.iter().any(|rec| &rec.id == r) {
            relations.push(RelationRecord::from_id(r));
        }
    }
    Graph::from_id_triples(entities, relations, &triples)
}

pub fn save_graph(graph: &Graph, entities_path: &Path, triples_path: &Path) -> Result<()> {
    let mut ew = BufWriter::new(File::create(entities_path)?);
    for e in graph.entities() {
        serde_json::to_writer(&mut ew, e)?;
        ew.write_all(b"\n")?;
    }
    ew.flush()?;

    let mut tw = BufWriter::new(File::create(triples_path)?);
    for t in graph.triples() {
        writeln!(
            tw,
            "{}\t{}\t{}",
            graph.entity(t.head).id,
            graph.relation(t.relation).id,
            graph.entity(t.tail).id
        )?;
    }
    tw.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    mode: SplitMode,
    seed: u64,
    train: Vec<usize>,
    valid: Vec<usize>,
    test: Vec<usize>,
}

/// Writes the index lists of a split. For inductive splits the valid/test
/// indices refer to the evaluation graph, which is saved separately by the
/// caller via [`save_graph`].
pub fn save_splits(splits: &SplitSet, path: &Path) -> Result<()> {
    let file = SplitFile {
        mode: splits.mode,
        seed: splits.seed,
        train: splits.train.clone(),
        valid: splits.valid.clone(),
        test: splits.test.clone(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &file)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads a splits.json and checks every index against the graph it refers to
/// (`eval_graph` for inductive valid/test indices, `graph` otherwise).
pub fn load_splits(path: &Path, graph: &Graph, eval_graph: Option<Graph>) -> Result<SplitSet> {
    let file: SplitFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let check = |name: &str, idxs: &[usize], bound: usize| -> Result<()> {
        for &i in idxs {
            if i >= bound {
                return Err(BiLinkError::Referential(format!(
                    "{name} split index {i} out of range (graph has {bound} triples)"
                )));
            }
        }
        Ok(())
    };
    check("train", &file.train, graph.triple_count())?;
    match (file.mode, &eval_graph) {
        (SplitMode::Inductive, Some(eg)) => {
            check("valid", &file.valid, eg.triple_count())?;
            check("test", &file.test, eg.triple_count())?;
        }
        (SplitMode::Inductive, None) => {
            return Err(BiLinkError::Referential(
                "inductive splits require an evaluation graph".into(),
            ));
        }
        (SplitMode::Transductive, _) => {
            check("valid", &file.valid, graph.triple_count())?;
            check("test", &file.test, graph.triple_count())?;
        }
    }
    Ok(SplitSet {
        mode: file.mode,
        seed: file.seed,
        train: file.train,
        valid: file.valid,
        test: file.test,
        eval_graph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn write(path: &Path, content: &str) {
        std::fs::write(path, content).unwrap();
    }

    #[test]
    fn graph_round_trips_through_files() {
        let dir = TempDir::new().unwrap();
        let ep = dir.path().join("entities.jsonl");
        let tp = dir.path().join("triples.tsv");
        write(
            &ep,
            "{\"id\":\"a\",\"name\":\"alpha\",\"description\":\"first one\"}\n\
             {\"id\":\"b\",\"name\":\"beta\",\"description\":\"\"}\n",
        );
        write(&tp, "a\tlikes\tb\nb\tlikes\ta\n");
        let g = load_graph(&ep, &tp).unwrap();
        assert_eq!(g.entity_count(), 2);
        assert_eq!(g.triple_count(), 2);
        assert_eq!(g.relation(0).surface, "likes");

        let ep2 = dir.path().join("entities2.jsonl");
        let tp2 = dir.path().join("triples2.tsv");
        save_graph(&g, &ep2, &tp2).unwrap();
        let g2 = load_graph(&ep2, &tp2).unwrap();
        assert_eq!(g2.entity_count(), g.entity_count());
        assert_eq!(g2.triples(), g.triples());
    }

    #[test]
    fn missing_description_defaults_to_empty() {
        let dir = TempDir::new().unwrap();
        let ep = dir.path().join("entities.jsonl");
        write(&ep, "{\"id\":\"a\",\"name\":\"alpha\"}\n");
        let recs = load_entities(&ep).unwrap();
        assert_eq!(recs[0].description, "");
    }

    #[test]
    fn malformed_json_reports_line() {
        let dir = TempDir::new().unwrap();
        let ep = dir.path().join("entities.jsonl");
        write(&ep, "{\"id\":\"a\",\"name\":\"alpha\"}\nnot json\n");
        match load_entities(&ep).unwrap_err() {
            BiLinkError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let dir = TempDir::new().unwrap();
        let tp = dir.path().join("triples.tsv");
        write(&tp, "a\tr\tb\na\tr\n");
        match load_triples(&tp).unwrap_err() {
            BiLinkError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn splits_round_trip_and_validate() {
        let dir = TempDir::new().unwrap();
        let g = Graph::from_id_triples(
            vec![super::super::tests::entity("a"), super::super::tests::entity("b")],
            vec![RelationRecord::from_id("r")],
            &[
                ("a".into(), "r".into(), "b".into()),
                ("b".into(), "r".into(), "a".into()),
            ],
        )
        .unwrap();
        let s = SplitSet {
            mode: SplitMode::Transductive,
            seed: 9,
            train: vec![0],
            valid: vec![],
            test: vec![1],
            eval_graph: None,
        };
        let sp = dir.path().join("splits.json");
        save_splits(&s, &sp).unwrap();
        let loaded = load_splits(&sp, &g, None).unwrap();
        assert_eq!(loaded.train, vec![0]);
        assert_eq!(loaded.test, vec![1]);
        assert_eq!(loaded.seed, 9);

        let bad = SplitSet {
            test: vec![7],
            ..s
        };
        save_splits(&bad, &sp).unwrap();
        assert!(load_splits(&sp, &g, None).is_err());
    }
}
