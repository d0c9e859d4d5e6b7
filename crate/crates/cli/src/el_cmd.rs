//! Entity-linking subcommands: candidate building, encoder training, and
//! candidate ranking.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use log::info;
use serde::Serialize;

use bilink_core::checkpoint::{load_checkpoint, save_checkpoint};
use bilink_core::el::io::{load_candidate_sets, load_documents, load_mentions, save_candidate_sets};
use bilink_core::el::{
    build_all_candidates, corpus_vocab, el_evaluate, el_train, write_el_epoch_log, Bm25Params,
    CandidatePolicy, DomainCollection, Document,
};
use bilink_core::eval::RankingMetrics;
use bilink_core::model::{ModelConfig, ParamStore};
use bilink_core::prompt::PromptRuleBase;

use crate::args::{ElBuildArgs, ElEvalArgs, ElTrainArgs};
use crate::report::{ensure_out_dir, hash_config, portable, resolve_train_config, write_report, ConfigError};

fn collections_of(documents: Vec<Document>) -> anyhow::Result<BTreeMap<String, DomainCollection>> {
    let mut by_domain: BTreeMap<String, Vec<Document>> = BTreeMap::new();
    for d in documents {
        by_domain.entry(d.domain.clone()).or_default().push(d);
    }
    let mut collections = BTreeMap::new();
    for (domain, group) in by_domain {
        let collection = DomainCollection::build(&domain, group)?;
        collections.insert(domain, collection);
    }
    Ok(collections)
}

#[derive(Serialize)]
struct BuildHashed {
    k: usize,
    force_gold: bool,
    k1: f64,
    b: f64,
}

#[derive(Serialize)]
struct BuildBody {
    subcommand: &'static str,
    seed: u64,
    config_hash: String,
    mentions_in: usize,
    sets_out: usize,
    dropped: usize,
    artifacts: Vec<&'static str>,
}

pub fn run_el_build(args: &ElBuildArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let documents = load_documents(&args.documents)?;
    let mentions = load_mentions(&args.mentions)?;
    let collections = collections_of(documents)?;
    let params = Bm25Params::default();
    let policy = CandidatePolicy { k: args.k, force_gold: args.force_gold, params };
    let hash = hash_config(&BuildHashed {
        k: args.k,
        force_gold: args.force_gold,
        k1: params.k1,
        b: params.b,
    })?;

    let sets = build_all_candidates(&mentions, &collections, &policy, args.seed)?;
    info!("built {} candidate sets from {} mentions", sets.len(), mentions.len());

    let out = ensure_out_dir(&args.out)?;
    save_candidate_sets(&out.join("candidates.jsonl"), &sets)?;
    let body = BuildBody {
        subcommand: "el-build",
        seed: args.seed,
        config_hash: hash,
        mentions_in: mentions.len(),
        sets_out: sets.len(),
        dropped: mentions.len() - sets.len(),
        artifacts: vec!["candidates.jsonl"],
    };
    write_report(&out, &body, started)
}

#[derive(Serialize)]
struct ElTrainHashed<'a> {
    model: &'a ModelConfig,
    train: bilink_core::train::TrainConfig,
}

#[derive(Serialize)]
struct ElTrainBody {
    subcommand: &'static str,
    seed: u64,
    config_hash: String,
    epochs: usize,
    mentions: usize,
    final_loss: Option<f64>,
    artifacts: Vec<&'static str>,
}

pub fn run_el_train(args: &ElTrainArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let out = ensure_out_dir(&args.out)?;
    let cfg = resolve_train_config(&args.overlay, &out)?;
    let documents = load_documents(&args.documents)?;
    let mentions = load_mentions(&args.mentions)?;
    let sets = load_candidate_sets(&args.candidates)?;
    let vocab = corpus_vocab(&documents, &mentions);
    let collections = collections_of(documents)?;

    let (mut store, rules) = match &args.init_from {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            (ck.store, ck.rules)
        }
        None => (
            ParamStore::init(ModelConfig::default(), vocab, cfg.seed)?,
            PromptRuleBase::single_default(),
        ),
    };
    let hash = hash_config(&ElTrainHashed { model: &store.config, train: portable(&cfg) })?;

    info!("training on {} mentions for {} epochs", mentions.len(), cfg.epochs);
    let reports = el_train(&mut store, &mentions, &sets, &collections, &cfg)?;

    save_checkpoint(&out.join("checkpoint.json"), &store, &rules, None)?;
    write_el_epoch_log(&out.join("epochs.jsonl"), &reports)?;
    let body = ElTrainBody {
        subcommand: "el-train",
        seed: cfg.seed,
        config_hash: hash,
        epochs: cfg.epochs,
        mentions: mentions.len(),
        final_loss: reports.last().map(|r| r.loss),
        artifacts: vec!["checkpoint.json", "epochs.jsonl"],
    };
    write_report(&out, &body, started)
}

#[derive(Serialize)]
struct ElEvalHashed<'a> {
    model: &'a ModelConfig,
    task: &'static str,
}

#[derive(Serialize)]
struct ElEvalBody<'a> {
    subcommand: &'static str,
    seed: u64,
    config_hash: String,
    metrics: &'a RankingMetrics,
    artifacts: Vec<&'static str>,
}

pub fn run_el_eval(args: &ElEvalArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let checkpoint: &Path = args
        .checkpoint
        .as_deref()
        .ok_or_else(|| ConfigError("missing required key --checkpoint".into()))?;
    let ck = load_checkpoint(checkpoint)?;
    let documents = load_documents(&args.documents)?;
    let mentions = load_mentions(&args.mentions)?;
    let sets = load_candidate_sets(&args.candidates)?;
    let collections = collections_of(documents)?;
    let hash = hash_config(&ElEvalHashed { model: &ck.store.config, task: "el-eval" })?;

    info!("ranking candidates for {} mentions", mentions.len());
    let metrics = el_evaluate(&ck.store, &mentions, &sets, &collections)?;

    let out = ensure_out_dir(&args.out)?;
    let body = ElEvalBody {
        subcommand: "el-eval",
        seed: args.seed,
        config_hash: hash,
        metrics: &metrics,
        artifacts: vec!["report.json"],
    };
    write_report(&out, &body, started)
}
