//! Graph-side subcommands: tagging warm-up, contrastive training, and
//! ranking evaluation.

use std::time::Instant;

use log::info;
use serde::Serialize;

use bilink_core::checkpoint::{load_checkpoint, save_checkpoint};
use bilink_core::eval::{evaluate, eval_reports, write_eval_reports, write_query_dump, EvalConfig, EvalSplit, RankingMetrics};
use bilink_core::graph::{graph_vocab, load_graph, load_splits, Graph};
use bilink_core::model::{ModelConfig, ParamStore};
use bilink_core::nn::AdamWConfig;
use bilink_core::prompt::{load_rule_base, load_seed_labels, PromptRuleBase};
use bilink_core::train::{description_corpus, pos_pretrain, train, write_epoch_log, PosTrainConfig, TrainConfig};

use crate::args::{EvalArgs, PosPretrainArgs, SplitChoice, TrainArgs};
use crate::report::{ensure_out_dir, hash_config, portable, resolve_train_config, write_report, ConfigError};

fn require_workers(workers: usize) -> anyhow::Result<()> {
    if workers == 0 {
        return Err(ConfigError("workers must be at least 1".into()).into());
    }
    Ok(())
}

fn load_eval_graph(
    entities: &Option<std::path::PathBuf>,
    triples: &Option<std::path::PathBuf>,
) -> anyhow::Result<Option<Graph>> {
    match (entities, triples) {
        (Some(e), Some(t)) => Ok(Some(load_graph(e, t)?)),
        _ => Ok(None),
    }
}

#[derive(Serialize)]
struct PosHashed<'a> {
    model: &'a ModelConfig,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    templates: &'a PromptRuleBase,
}

#[derive(Serialize)]
struct PosBody<'a> {
    subcommand: &'static str,
    seed: u64,
    config_hash: String,
    epochs: usize,
    mean_losses: &'a [f64],
    artifacts: Vec<&'static str>,
}

pub fn run_pos_pretrain(args: &PosPretrainArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    require_workers(args.workers)?;
    let graph = load_graph(&args.entities, &args.triples)?;
    let rules = match &args.templates {
        Some(path) => load_rule_base(path)?,
        None => PromptRuleBase::single_default(),
    };
    let model = ModelConfig::default();
    let hash = hash_config(&PosHashed {
        model: &model,
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        seed: args.seed,
        templates: &rules,
    })?;

    let mut store = ParamStore::init(model, graph_vocab(&graph), args.seed)?;
    let corpus = description_corpus(&graph);
    let cfg = PosTrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        optim: AdamWConfig { lr: args.lr, ..AdamWConfig::default() },
        seed: args.seed,
    };
    info!("tagging warm-up over {} descriptions for {} epochs", corpus.len(), cfg.epochs);
    let losses = pos_pretrain(&mut store, &corpus, &cfg)?;

    let out = ensure_out_dir(&args.out)?;
    save_checkpoint(&out.join("checkpoint.json"), &store, &rules, None)?;
    let body = PosBody {
        subcommand: "pos-pretrain",
        seed: args.seed,
        config_hash: hash,
        epochs: args.epochs,
        mean_losses: &losses,
        artifacts: vec!["checkpoint.json"],
    };
    write_report(&out, &body, started)
}

#[derive(Serialize)]
struct TrainHashed<'a> {
    model: &'a ModelConfig,
    train: TrainConfig,
    templates: &'a PromptRuleBase,
    k_clusters: usize,
}

#[derive(Serialize)]
struct FinalLosses {
    l: f64,
    l1: f64,
    l2: f64,
    l3: f64,
}

#[derive(Serialize)]
struct TrainBody {
    subcommand: &'static str,
    seed: u64,
    config_hash: String,
    epochs: usize,
    train_triples: usize,
    final_losses: Option<FinalLosses>,
    artifacts: Vec<&'static str>,
}

pub fn run_train(args: &TrainArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let out = ensure_out_dir(&args.out)?;
    let cfg = resolve_train_config(&args.overlay, &out)?;
    let graph = load_graph(&args.entities, &args.triples)?;
    let eval_graph = load_eval_graph(&args.eval_entities, &args.eval_triples)?;
    let splits = load_splits(&args.splits, &graph, eval_graph)?;

    let (mut store, checkpoint_rules) = match &args.init_from {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            (ck.store, Some(ck.rules))
        }
        None => (
            ParamStore::init(ModelConfig::default(), graph_vocab(&graph), cfg.seed)?,
            None,
        ),
    };
    let rules = match (&args.templates, checkpoint_rules) {
        (Some(path), _) => load_rule_base(path)?,
        (None, Some(rules)) => rules,
        (None, None) => PromptRuleBase::single_default(),
    };
    if let Some(k) = args.k_clusters {
        if rules.len() != k {
            return Err(ConfigError(format!(
                "k-clusters {k} does not match the {} loaded templates",
                rules.len()
            ))
            .into());
        }
    }
    let labels = match &args.seed_labels {
        Some(path) => load_seed_labels(path, &graph, &rules)?,
        None => Vec::new(),
    };

    let hash = hash_config(&TrainHashed {
        model: &store.config,
        train: portable(&cfg),
        templates: &rules,
        k_clusters: rules.len(),
    })?;
    info!(
        "training on {} triples for {} epochs with {} templates",
        splits.train.len(),
        cfg.epochs,
        rules.len()
    );
    let outcome = train(&mut store, &graph, &splits.train, &rules, &labels, &cfg)?;

    save_checkpoint(&out.join("checkpoint.json"), &store, &rules, outcome.gmm.as_ref())?;
    write_epoch_log(&out.join("epochs.jsonl"), &outcome.reports)?;
    let body = TrainBody {
        subcommand: "train",
        seed: cfg.seed,
        config_hash: hash,
        epochs: cfg.epochs,
        train_triples: splits.train.len(),
        final_losses: outcome.reports.last().map(|r| FinalLosses {
            l: r.l,
            l1: r.l1,
            l2: r.l2,
            l3: r.l3,
        }),
        artifacts: vec!["checkpoint.json", "epochs.jsonl"],
    };
    write_report(&out, &body, started)
}

#[derive(Serialize)]
struct EvalHashed<'a> {
    model: &'a ModelConfig,
    eval: &'a EvalConfig,
    split: &'static str,
}

#[derive(Serialize)]
struct EvalBody<'a> {
    subcommand: &'static str,
    seed: u64,
    split: &'static str,
    split_seed: u64,
    config_hash: String,
    mean: &'a RankingMetrics,
    artifacts: Vec<&'static str>,
}

pub fn run_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let checkpoint = args
        .checkpoint
        .as_ref()
        .ok_or_else(|| ConfigError("missing required key --checkpoint".into()))?;
    let ck = load_checkpoint(checkpoint)?;
    let graph = load_graph(&args.entities, &args.triples)?;
    let eval_graph = load_eval_graph(&args.eval_entities, &args.eval_triples)?;
    let splits = load_splits(&args.splits, &graph, eval_graph)?;
    let which = match args.split {
        SplitChoice::Valid => EvalSplit::Valid,
        SplitChoice::Test => EvalSplit::Test,
    };
    let cfg = EvalConfig {
        k: args.k,
        w: args.w,
        temperature: args.temp,
        posthoc: args.posthoc,
        ..EvalConfig::default()
    };
    let hash = hash_config(&EvalHashed { model: &ck.store.config, eval: &cfg, split: which.as_str() })?;

    info!(
        "ranking the {} split of {} held-out edges",
        which.as_str(),
        match which {
            EvalSplit::Valid => splits.valid.len(),
            EvalSplit::Test => splits.test.len(),
        }
    );
    let outcome = evaluate(&ck.store, &graph, &splits, which, &ck.rules, ck.gmm.as_ref(), &cfg)?;

    let out = ensure_out_dir(&args.out)?;
    let rows = eval_reports(&outcome, which.as_str(), &hash);
    write_eval_reports(&out.join("eval_report.json"), &rows)?;
    let mut queries = outcome.forward_queries.clone();
    queries.extend(outcome.backward_queries.iter().cloned());
    write_query_dump(&out.join("queries.tsv"), &queries)?;

    let body = EvalBody {
        subcommand: "eval",
        seed: args.seed,
        split: which.as_str(),
        split_seed: splits.seed,
        config_hash: hash,
        mean: &outcome.mean,
        artifacts: vec!["eval_report.json", "queries.tsv"],
    };
    write_report(&out, &body, started)
}
