//! Dataset synthesis from a spec file.
//!
//! The spec kind is read off its fields: a graph spec carries
//! `entity_count`, a linking-corpus spec carries `domains`. Unknown keys
//! are rejected so a typo cannot silently fall back to a default.

use std::fs;
use std::time::Instant;

use anyhow::Context;
use log::info;
use serde::Serialize;
use serde_json::Value;

use bilink_core::el::io::{save_documents, save_mentions};
use bilink_core::el::{synth_el_corpus, ElSynthSpec};
use bilink_core::graph::{save_graph, save_splits, split_inductive, split_transductive, synth_kg, SynthSpec};

use crate::args::{SplitModeArg, SynthArgs};
use crate::report::{ensure_out_dir, hash_config, write_report, ConfigError};

const TRANSDUCTIVE_RATIOS: (f64, f64, f64) = (0.8, 0.1, 0.1);
const INDUCTIVE_HOLDOUT: f64 = 0.1;

const KG_KEYS: [&str; 4] = ["entity_count", "relations", "seed", "flavor_vocab"];
const RELATION_KEYS: [&str; 4] = ["id", "surface", "pattern", "density"];
const EL_KEYS: [&str; 5] =
    ["domains", "entities_per_domain", "mentions_per_entity", "classes", "seed"];

#[derive(Serialize)]
struct SplitSizes {
    train: usize,
    valid: usize,
    test: usize,
}

#[derive(Serialize)]
struct KgBody {
    subcommand: &'static str,
    kind: &'static str,
    seed: u64,
    config_hash: String,
    entities: usize,
    relations: usize,
    triples: usize,
    split_mode: &'static str,
    split_sizes: SplitSizes,
    artifacts: Vec<&'static str>,
}

#[derive(Serialize)]
struct ElBody {
    subcommand: &'static str,
    kind: &'static str,
    seed: u64,
    config_hash: String,
    domains: usize,
    documents: usize,
    mentions: usize,
    artifacts: Vec<&'static str>,
}

fn reject_unknown_keys(value: &Value, allowed: &[&str], what: &str) -> anyhow::Result<()> {
    let Some(map) = value.as_object() else {
        return Err(ConfigError(format!("{what} must be a JSON object")).into());
    };
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(ConfigError(format!("unknown key {key:?} in {what}")).into());
        }
    }
    Ok(())
}

pub fn run(args: &SynthArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let value: Value = serde_json::from_str(&text)?;
    let map = value
        .as_object()
        .ok_or_else(|| ConfigError("spec must be a JSON object".into()))?;

    if map.contains_key("entity_count") {
        run_kg(args, &value, started)
    } else if map.contains_key("domains") {
        run_el(args, &value, started)
    } else {
        Err(ConfigError(
            "spec names neither entity_count (graph) nor domains (linking corpus)".into(),
        )
        .into())
    }
}

fn run_kg(args: &SynthArgs, value: &Value, started: Instant) -> anyhow::Result<()> {
    reject_unknown_keys(value, &KG_KEYS, "graph spec")?;
    if let Some(relations) = value.get("relations").and_then(Value::as_array) {
        for (i, rel) in relations.iter().enumerate() {
            reject_unknown_keys(rel, &RELATION_KEYS, &format!("relations[{i}]"))?;
        }
    }
    let mut spec: SynthSpec = serde_json::from_value(value.clone())?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let split_mode = match args.split_mode {
        SplitModeArg::Transductive => "transductive",
        SplitModeArg::Inductive => "inductive",
    };
    let hash = hash_config(&(&spec, split_mode))?;

    let graph = synth_kg(&spec)?;
    let splits = match args.split_mode {
        SplitModeArg::Transductive => split_transductive(&graph, TRANSDUCTIVE_RATIOS, spec.seed)?,
        SplitModeArg::Inductive => split_inductive(&graph, INDUCTIVE_HOLDOUT, spec.seed)?,
    };

    info!(
        "generated {} entities and {} triples over {} relations",
        graph.entity_count(),
        graph.triple_count(),
        graph.relations().len()
    );
    let out = ensure_out_dir(&args.out)?;
    save_graph(&graph, &out.join("entities.jsonl"), &out.join("triples.tsv"))?;
    save_splits(&splits, &out.join("splits.json"))?;
    let mut artifacts = vec!["entities.jsonl", "triples.tsv", "splits.json"];
    if let Some(eval_graph) = &splits.eval_graph {
        save_graph(
            eval_graph,
            &out.join("eval_entities.jsonl"),
            &out.join("eval_triples.tsv"),
        )?;
        artifacts.push("eval_entities.jsonl");
        artifacts.push("eval_triples.tsv");
    }

    let body = KgBody {
        subcommand: "synth",
        kind: "kg",
        seed: spec.seed,
        config_hash: hash,
        entities: graph.entity_count(),
        relations: graph.relations().len(),
        triples: graph.triple_count(),
        split_mode,
        split_sizes: SplitSizes {
            train: splits.train.len(),
            valid: splits.valid.len(),
            test: splits.test.len(),
        },
        artifacts,
    };
    write_report(&out, &body, started)
}

fn run_el(args: &SynthArgs, value: &Value, started: Instant) -> anyhow::Result<()> {
    reject_unknown_keys(value, &EL_KEYS, "linking-corpus spec")?;
    let mut spec: ElSynthSpec = serde_json::from_value(value.clone())?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let hash = hash_config(&spec)?;

    let (documents, mentions) = synth_el_corpus(&spec)?;
    info!("generated {} documents and {} mentions", documents.len(), mentions.len());
    let out = ensure_out_dir(&args.out)?;
    save_documents(&out.join("documents.jsonl"), &documents)?;
    save_mentions(&out.join("mentions.jsonl"), &mentions)?;

    let body = ElBody {
        subcommand: "synth",
        kind: "el",
        seed: spec.seed,
        config_hash: hash,
        domains: spec.domains,
        documents: documents.len(),
        mentions: mentions.len(),
        artifacts: vec!["documents.jsonl", "mentions.jsonl"],
    };
    write_report(&out, &body, started)
}
