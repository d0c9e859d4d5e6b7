//! The contrastive training loop.
//!
//! Every batch encodes four pooled vectors per triple plus one bare
//! template per direction, ties them together on a small loss tape, and
//! routes the leaf gradients back through the per-call encoder tapes.
//! Gradient accumulation follows a fixed job order, so any worker count
//! reproduces the sequential run byte for byte.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::PathBuf;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{encode_train, entity_plan, expression_plan, SeqPlan};
use crate::error::{BiLinkError, Result};
use crate::graph::prepare_description;
use crate::graph::Graph;
use crate::model::{EncoderSide, ParamStore};
use crate::nn::{AdamW, AdamWConfig, NodeId, Tape, Tensor};
use crate::prompt::{
    em_fit, embed_expression, init_gmm_from_seed, select_template, verbalize, Direction,
    GmmState, PromptRuleBase, SeedLabel,
};
use crate::train::batch::make_batches;
use crate::train::loss::{batch_loss_nodes, BatchNodes, LossReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub temperature: f64,
    pub beta: f64,
    pub t_sharp: f64,
    pub em_rounds: usize,
    pub seed: u64,
    pub workers: usize,
    pub backward_branch: bool,
    pub desc_tokens: usize,
    pub dump_dir: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            warmup_steps: 500,
            weight_decay: 1e-4,
            epochs: 30,
            batch_size: 32,
            temperature: 0.05,
            beta: 0.1,
            t_sharp: 0.5,
            em_rounds: 1,
            seed: 0,
            workers: 1,
            backward_branch: true,
            desc_tokens: 16,
            dump_dir: ".".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(BiLinkError::Config("temperature must be positive".into()));
        }
        if self.beta < 0.0 {
            return Err(BiLinkError::Config("beta must be nonnegative".into()));
        }
        if !(self.t_sharp > 0.0 && self.t_sharp <= 1.0) {
            return Err(BiLinkError::Config("t_sharp must lie in (0, 1]".into()));
        }
        if self.lr < 0.0 {
            return Err(BiLinkError::Config("learning rate must be nonnegative".into()));
        }
        if self.epochs == 0 || self.batch_size < 2 || self.workers == 0 || self.desc_tokens == 0 {
            return Err(BiLinkError::Config(
                "epochs, workers, desc_tokens must be positive and batch_size at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l: f64,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub reports: Vec<EpochReport>,
    pub gmm: Option<GmmState>,
}

#[derive(Clone, Copy)]
enum Role {
    Tf(usize),
    Hb(usize),
    Hf(usize),
    Tb(usize),
    TauF(usize),
    TauB(usize),
}

struct JobSpec {
    side: EncoderSide,
    plan: SeqPlan,
    role: Role,
}

struct JobOut {
    tape: Tape,
    node: NodeId,
    pooled: Tensor,
}

struct TrainCtx<'a> {
    graph: &'a Graph,
    rules: &'a PromptRuleBase,
    cfg: &'a TrainConfig,
    descs: Vec<Vec<String>>,
    entity_plans: Vec<SeqPlan>,
}

fn mix(seed: u64, epoch: u64, step: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(epoch.wrapping_mul(0x2545_F491_4F6C_DD1D))
        .wrapping_add(step)
}

fn encode_jobs(
    store: &ParamStore,
    specs: &[JobSpec],
    workers: usize,
    rng_seed: u64,
) -> Vec<JobOut> {
    let run = |i: usize, spec: &JobSpec| -> JobOut {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(i as u64 + 1);
        let node = encode_train(&mut tape, store, spec.side, &spec.plan, &mut rng);
        let pooled = tape.value(node).clone();
        JobOut { tape, node, pooled }
    };
    let mut outs: Vec<Option<JobOut>> = specs.iter().map(|_| None).collect();
    if workers <= 1 {
        for (i, spec) in specs.iter().enumerate() {
            outs[i] = Some(run(i, spec));
        }
    } else {
        let chunk = specs.len().div_ceil(workers);
        std::thread::scope(|sc| {
            for (ci, (spec_chunk, out_chunk)) in
                specs.chunks(chunk).zip(outs.chunks_mut(chunk)).enumerate()
            {
                let run = &run;
                sc.spawn(move || {
                    for (j, (spec, out)) in spec_chunk.iter().zip(out_chunk.iter_mut()).enumerate()
                    {
                        *out = Some(run(ci * chunk + j, spec));
                    }
                });
            }
        });
    }
    outs.into_iter().map(|o| o.expect("encode job ran")).collect()
}

fn fold_grads(acc: &mut BTreeMap<String, Tensor>, job: &JobOut) {
    for (name, grad) in job.tape.param_grads() {
        match acc.get_mut(name) {
            Some(t) => t.add_assign(grad),
            None => {
                acc.insert(name.to_string(), grad.clone());
            }
        }
    }
}

/// Runs per-job backpropagation in waves of `workers`, folding results in
/// job order so the accumulated gradient never depends on thread timing.
fn backward_jobs(
    jobs: &mut [JobOut],
    seeds: &[Option<Tensor>],
    workers: usize,
    acc: &mut BTreeMap<String, Tensor>,
) {
    if workers <= 1 {
        for (job, seed) in jobs.iter_mut().zip(seeds) {
            if let Some(seed) = seed {
                job.tape.backward_seeded(job.node, seed.clone());
                fold_grads(acc, job);
            }
        }
        return;
    }
    let mut start = 0;
    while start < jobs.len() {
        let end = (start + workers).min(jobs.len());
        std::thread::scope(|sc| {
            for (job, seed) in jobs[start..end].iter_mut().zip(&seeds[start..end]) {
                if seed.is_some() {
                    sc.spawn(|| {
                        job.tape.backward_seeded(job.node, seed.clone().expect("seed present"));
                    });
                }
            }
        });
        for job in &jobs[start..end] {
            fold_grads(acc, job);
        }
        start = end;
    }
}

fn abort_dump(
    ctx: &TrainCtx,
    batch: &[usize],
    report: &LossReport,
    epoch: usize,
    step: usize,
    seed: u64,
) -> Result<BiLinkError> {
    #[derive(Serialize)]
    struct Dump<'a> {
        epoch: usize,
        step: usize,
        seed: u64,
        losses: &'a LossReport,
        triples: Vec<[String; 3]>,
    }
    let triples = batch
        .iter()
        .map(|&i| {
            let t = &ctx.graph.triples()[i];
            [
                ctx.graph.entity(t.head).id.clone(),
                ctx.graph.relation(t.relation).id.clone(),
                ctx.graph.entity(t.tail).id.clone(),
            ]
        })
        .collect();
    let dump = Dump { epoch, step, seed, losses: report, triples };
    let path = PathBuf::from(&ctx.cfg.dump_dir)
        .join(format!("bilink-abort-seed{seed}-epoch{epoch}-step{step}.json"));
    fs::write(&path, serde_json::to_vec_pretty(&dump)?)?;
    Ok(BiLinkError::TrainingAborted {
        msg: format!("non-finite loss at epoch {epoch} step {step}"),
        dump_path: path.display().to_string(),
    })
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    store: &mut ParamStore,
    ctx: &TrainCtx,
    batch: &[usize],
    chosen: &[(String, Option<String>)],
    optimizer: &mut AdamW,
    trainable: &BTreeSet<String>,
    epoch: usize,
    global_step: u64,
) -> Result<LossReport> {
    let cfg = ctx.cfg;
    let max_len = store.config.max_len;
    let n = batch.len();
    let mut specs = Vec::with_capacity(4 * n + 4);
    let mut taus: BTreeSet<(String, bool)> = BTreeSet::new();
    for (i, &tri_idx) in batch.iter().enumerate() {
        let t = &ctx.graph.triples()[tri_idx];
        let surface = &ctx.graph.relation(t.relation).surface;
        let fwd = ctx.rules.require(&chosen[i].0)?;
        let expr = verbalize(fwd, Direction::Forward, surface);
        specs.push(JobSpec {
            side: EncoderSide::Expression,
            plan: expression_plan(&store.vocab, &expr, &ctx.descs[t.head], max_len)?,
            role: Role::Tf(i),
        });
        specs.push(JobSpec {
            side: EncoderSide::Entity,
            plan: ctx.entity_plans[t.tail].clone(),
            role: Role::Tb(i),
        });
        taus.insert((fwd.id.clone(), true));
        if let Some(bwd_id) = &chosen[i].1 {
            let bwd = ctx.rules.require(bwd_id)?;
            let expr = verbalize(bwd, Direction::Backward, surface);
            specs.push(JobSpec {
                side: EncoderSide::Expression,
                plan: expression_plan(&store.vocab, &expr, &ctx.descs[t.tail], max_len)?,
                role: Role::Hb(i),
            });
            specs.push(JobSpec {
                side: EncoderSide::Entity,
                plan: ctx.entity_plans[t.head].clone(),
                role: Role::Hf(i),
            });
            taus.insert((bwd.id.clone(), false));
        }
    }
    let tau_list: Vec<(String, bool)> = taus.into_iter().collect();
    for (idx, (tpl_id, is_fwd)) in tau_list.iter().enumerate() {
        let tpl = ctx.rules.require(tpl_id)?;
        let direction = if *is_fwd { Direction::Forward } else { Direction::Backward };
        let bare = verbalize(tpl, direction, "[PAD]");
        specs.push(JobSpec {
            side: EncoderSide::Expression,
            plan: expression_plan(&store.vocab, &bare, &[], max_len)?,
            role: if *is_fwd { Role::TauF(idx) } else { Role::TauB(idx) },
        });
    }

    let rng_seed = mix(cfg.seed, epoch as u64, global_step);
    let mut jobs = encode_jobs(store, &specs, cfg.workers, rng_seed);

    let mut loss_tape = Tape::new();
    let mut leaves = Vec::with_capacity(jobs.len());
    let mut t_f = vec![0; n];
    let mut h_b = vec![0; n];
    let mut h_f = vec![0; n];
    let mut t_b = vec![0; n];
    let mut tau_leaves = vec![0; tau_list.len()];
    for (spec, job) in specs.iter().zip(&jobs) {
        let leaf = loss_tape.var(job.pooled.clone());
        leaves.push(leaf);
        match spec.role {
            Role::Tf(i) => t_f[i] = leaf,
            Role::Hb(i) => h_b[i] = leaf,
            Role::Hf(i) => h_f[i] = leaf,
            Role::Tb(i) => t_b[i] = leaf,
            Role::TauF(i) | Role::TauB(i) => tau_leaves[i] = leaf,
        }
    }
    let tau_index: HashMap<(String, bool), NodeId> = tau_list
        .iter()
        .cloned()
        .zip(tau_leaves.iter().cloned())
        .collect();
    let h_tau_f: Vec<NodeId> = chosen
        .iter()
        .map(|(fwd, _)| tau_index[&(fwd.clone(), true)])
        .collect();
    let h_tau_b: Vec<NodeId> = chosen
        .iter()
        .map(|(fwd, bwd)| match bwd {
            Some(b) => tau_index[&(b.clone(), false)],
            None => tau_index[&(fwd.clone(), true)],
        })
        .collect();
    let nodes = if cfg.backward_branch {
        BatchNodes { h_f, h_b, t_f: t_f.clone(), t_b, h_tau_f: h_tau_f.clone(), h_tau_b }
    } else {
        BatchNodes {
            h_f: t_f.clone(),
            h_b: t_f.clone(),
            t_f: t_f.clone(),
            t_b,
            h_tau_f: h_tau_f.clone(),
            h_tau_b: h_tau_f.clone(),
        }
    };
    let built = batch_loss_nodes(
        &mut loss_tape,
        &nodes,
        cfg.temperature,
        cfg.beta,
        cfg.backward_branch,
    );
    let report = LossReport {
        l1: loss_tape.value(built.l1).scalar(),
        l2: built.l2.map(|id| loss_tape.value(id).scalar()).unwrap_or(0.0),
        l3: built.l3.map(|id| loss_tape.value(id).scalar()).unwrap_or(0.0),
        total: loss_tape.value(built.total).scalar(),
        temperature: cfg.temperature,
        beta: cfg.beta,
    };
    if !(report.l1.is_finite()
        && report.l2.is_finite()
        && report.l3.is_finite()
        && report.total.is_finite())
    {
        return Err(abort_dump(ctx, batch, &report, epoch, global_step as usize, cfg.seed)?);
    }
    loss_tape.backward(built.total);

    let seeds: Vec<Option<Tensor>> = leaves
        .iter()
        .map(|&leaf| loss_tape.grad(leaf).cloned())
        .collect();
    let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
    backward_jobs(&mut jobs, &seeds, cfg.workers, &mut acc);
    acc.retain(|name, _| trainable.contains(name));
    optimizer.apply(&mut store.tensors, &acc);
    Ok(report)
}

fn pick(
    store: &ParamStore,
    ctx: &TrainCtx,
    gmm: &Option<GmmState>,
    cache: &mut HashMap<(usize, usize, bool), String>,
    entity: usize,
    relation: usize,
    direction: Direction,
) -> Result<String> {
    let key = (entity, relation, direction == Direction::Forward);
    if let Some(hit) = cache.get(&key) {
        return Ok(hit.clone());
    }
    let id = match gmm {
        None => ctx.rules.templates[0].id.clone(),
        Some(state) => {
            select_template(state, store, ctx.graph, entity, relation, ctx.rules, direction)?
                .id
                .clone()
        }
    };
    cache.insert(key, id.clone());
    Ok(id)
}

/// Embeddings of every (training edge, template) pair in both directions,
/// the data the mixture is refit on each epoch.
fn em_embeddings(
    store: &ParamStore,
    graph: &Graph,
    train_idx: &[usize],
    rules: &PromptRuleBase,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(train_idx.len() * rules.len() * 2);
    for &i in train_idx {
        let t = &graph.triples()[i];
        for tpl in &rules.templates {
            out.push(embed_expression(store, graph, t.head, t.relation, tpl, Direction::Forward)?);
            out.push(embed_expression(store, graph, t.tail, t.relation, tpl, Direction::Backward)?);
        }
    }
    Ok(out)
}

/// Trains the paired encoders in place. Returns per-epoch loss means and
/// the final template mixture, if one is in play.
pub fn train(
    store: &mut ParamStore,
    graph: &Graph,
    train_idx: &[usize],
    rules: &PromptRuleBase,
    seed_labels: &[SeedLabel],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(BiLinkError::Config("no training triples".into()));
    }
    if let Some(&bad) = train_idx.iter().find(|&&i| i >= graph.triple_count()) {
        return Err(BiLinkError::Referential(format!("training index {bad} out of range")));
    }
    if rules.len() == 0 {
        return Err(BiLinkError::Config("rule base holds no templates".into()));
    }
    let mut gmm = if rules.len() > 1 {
        if seed_labels.is_empty() {
            return Err(BiLinkError::Config(
                "template selection over multiple templates needs labeled seed edges".into(),
            ));
        }
        Some(init_gmm_from_seed(store, graph, seed_labels, rules)?)
    } else {
        None
    };
    let em_data = if gmm.is_some() && cfg.em_rounds > 0 {
        em_embeddings(store, graph, train_idx, rules)?
    } else {
        Vec::new()
    };

    let descs: Vec<Vec<String>> = (0..graph.entity_count())
        .map(|e| prepare_description(graph, e, cfg.desc_tokens))
        .collect();
    let entity_plans: Vec<SeqPlan> = descs
        .iter()
        .map(|d| entity_plan(&store.vocab, d, store.config.max_len))
        .collect::<Result<_>>()?;
    let ctx = TrainCtx { graph, rules, cfg, descs, entity_plans };

    let batches_per_epoch = make_batches(train_idx.len(), cfg.batch_size, cfg.seed, 0)?.len();
    if batches_per_epoch == 0 {
        return Err(BiLinkError::Config("train split too small for one batch".into()));
    }
    let mut optimizer = AdamW::new(AdamWConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        warmup_steps: cfg.warmup_steps,
        total_steps: cfg.epochs * batches_per_epoch,
        ..AdamWConfig::default()
    });
    let trainable: BTreeSet<String> = store.trainable_main().into_iter().collect();

    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut global_step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut cache: HashMap<(usize, usize, bool), String> = HashMap::new();
        let batches = make_batches(train_idx.len(), cfg.batch_size, cfg.seed, epoch as u64)?;
        let mut sums = [0.0f64; 4];
        for batch_local in &batches {
            let batch: Vec<usize> = batch_local.iter().map(|&i| train_idx[i]).collect();
            let mut chosen = Vec::with_capacity(batch.len());
            for &tri_idx in &batch {
                let t = &graph.triples()[tri_idx];
                let fwd = pick(store, &ctx, &gmm, &mut cache, t.head, t.relation, Direction::Forward)?;
                let bwd = if cfg.backward_branch {
                    Some(pick(store, &ctx, &gmm, &mut cache, t.tail, t.relation, Direction::Backward)?)
                } else {
                    None
                };
                chosen.push((fwd, bwd));
            }
            let report = train_step(
                store,
                &ctx,
                &batch,
                &chosen,
                &mut optimizer,
                &trainable,
                epoch,
                global_step,
            )?;
            sums[0] += report.l1;
            sums[1] += report.l2;
            sums[2] += report.l3;
            sums[3] += report.total;
            global_step += 1;
        }
        if let Some(state) = gmm.as_mut() {
            if cfg.em_rounds > 0 {
                *state = em_fit(state, &em_data, cfg.em_rounds, cfg.t_sharp)?;
            }
        }
        let nb = batches.len() as f64;
        let report = EpochReport {
            epoch,
            l1: sums[0] / nb,
            l2: sums[1] / nb,
            l3: sums[2] / nb,
            l: sums[3] / nb,
            lr: optimizer.lr_at(optimizer.steps_taken()),
            seed: cfg.seed,
        };
        info!(
            "epoch {} l={:.4} l1={:.4} l2={:.4} l3={:.4} lr={:.2e}",
            report.epoch, report.l, report.l1, report.l2, report.l3, report.lr
        );
        reports.push(report);
    }
    Ok(TrainOutcome { reports, gmm })
}

/// Writes one JSON object per epoch, newline separated.
pub fn write_epoch_log(path: &std::path::Path, reports: &[EpochReport]) -> Result<()> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synth_kg, RelationPattern, RelationSpec, SynthSpec};
    use crate::model::ModelConfig;
    use crate::text::Vocab;

    fn toy_graph(entities: usize, seed: u64) -> Graph {
        let spec = SynthSpec {
            entity_count: entities,
            relations: vec![
                RelationSpec {
                    id: "near".into(),
                    surface: Some("is near".into()),
                    pattern: RelationPattern::Symmetric,
                    density: 0.4,
                },
                RelationSpec {
                    id: "feeds".into(),
                    surface: None,
                    pattern: RelationPattern::Plain,
                    density: 0.3,
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
        let mut texts: Vec<String> = graph.entities().iter().map(|e| e.description.clone()).collect();
        texts.extend(graph.relations().iter().map(|r| r.surface.clone()));
        let vocab = Vocab::build(texts.iter().map(|s| s.as_str()), 1);
        ParamStore::init(cfg, vocab, seed).unwrap()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 4,
            warmup_steps: 4,
            em_rounds: 0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_lr_leaves_parameters_untouched() {
        let graph = toy_graph(8, 1);
        let mut store = toy_store(&graph, 2);
        let before = store.tensors.clone();
        let idx: Vec<usize> = (0..graph.triple_count()).collect();
        let cfg = TrainConfig { lr: 0.0, ..quick_cfg() };
        let out = train(
            &mut store,
            &graph,
            &idx,
            &PromptRuleBase::single_default(),
            &[],
            &cfg,
        )
        .unwrap();
        assert_eq!(out.reports.len(), 2);
        for (name, t) in &before {
            let after = &store.tensors[name];
            assert!(t.data.iter().zip(&after.data).all(|(a, b)| a.to_bits() == b.to_bits()),
                "{name} changed under lr 0");
        }
    }

    #[test]
    fn repeated_runs_are_bitwise_identical() {
        let graph = toy_graph(8, 3);
        let idx: Vec<usize> = (0..graph.triple_count()).collect();
        let cfg = quick_cfg();
        let rules = PromptRuleBase::single_default();
        let mut s1 = toy_store(&graph, 5);
        let mut s2 = toy_store(&graph, 5);
        let r1 = train(&mut s1, &graph, &idx, &rules, &[], &cfg).unwrap();
        let r2 = train(&mut s2, &graph, &idx, &rules, &[], &cfg).unwrap();
        assert_eq!(r1.reports, r2.reports);
        for (name, t) in &s1.tensors {
            assert_eq!(t.data, s2.tensors[name].data, "{name} diverged");
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let graph = toy_graph(8, 4);
        let idx: Vec<usize> = (0..graph.triple_count()).collect();
        let rules = PromptRuleBase::single_default();
        let mut s1 = toy_store(&graph, 6);
        let mut s2 = toy_store(&graph, 6);
        let c1 = quick_cfg();
        let c2 = TrainConfig { workers: 3, ..quick_cfg() };
        let r1 = train(&mut s1, &graph, &idx, &rules, &[], &c1).unwrap();
        let r2 = train(&mut s2, &graph, &idx, &rules, &[], &c2).unwrap();
        assert_eq!(r1.reports, r2.reports);
        for (name, t) in &s1.tensors {
            assert_eq!(t.data, s2.tensors[name].data, "{name} diverged");
        }
    }

    #[test]
    fn disabled_backward_branch_reports_zero_l2_l3() {
        let graph = toy_graph(8, 7);
        let mut store = toy_store(&graph, 8);
        let idx: Vec<usize> = (0..graph.triple_count()).collect();
        let cfg = TrainConfig { backward_branch: false, beta: 0.0, ..quick_cfg() };
        let out = train(&mut store, &graph, &idx, &PromptRuleBase::single_default(), &[], &cfg)
            .unwrap();
        for r in &out.reports {
            assert_eq!(r.l2, 0.0);
            assert_eq!(r.l3, 0.0);
            assert_eq!(r.l, r.l1);
        }
    }

    #[test]
    fn short_run_reduces_mean_loss() {
        let graph = toy_graph(12, 9);
        let mut store = toy_store(&graph, 10);
        let idx: Vec<usize> = (0..graph.triple_count()).collect();
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 8,
            warmup_steps: 3,
            lr: 2e-3,
            em_rounds: 0,
            ..TrainConfig::default()
        };
        let out = train(&mut store, &graph, &idx, &PromptRuleBase::single_default(), &[], &cfg)
            .unwrap();
        let first = out.reports.first().unwrap().l;
        let last = out.reports.last().unwrap().l;
        assert!(last < first, "loss did not shrink: {first} -> {last}");
    }

    #[test]
    fn non_finite_loss_aborts_with_dump() {
        let graph = toy_graph(8, 11);
        let mut store = toy_store(&graph, 12);
        let poisoned = store.tensors.get_mut("expr.tok_emb").unwrap();
        poisoned.data[0] = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        let idx: Vec<usize> = (0..graph.triple_count()).collect();
        let cfg = TrainConfig {
            dump_dir: dir.path().display().to_string(),
            ..quick_cfg()
        };
        let err = train(&mut store, &graph, &idx, &PromptRuleBase::single_default(), &[], &cfg)
            .unwrap_err();
        match err {
            BiLinkError::TrainingAborted { dump_path, .. } => {
                assert!(std::path::Path::new(&dump_path).exists());
            }
            other => panic!("expected a training abort, got {other:?}"),
        }
    }

    #[test]
    fn multiple_templates_run_through_the_mixture() {
        let graph = toy_graph(8, 13);
        let mut store = toy_store(&graph, 14);
        let idx: Vec<usize> = (0..graph.triple_count()).collect();
        let rules = PromptRuleBase::new(vec![
            crate::prompt::PromptTemplate {
                id: "t0".into(),
                syntax_tag: "svo".into(),
                forward: "{REL} [TMARK]".into(),
                backward: "[HMARK] {REL}".into(),
            },
            crate::prompt::PromptTemplate {
                id: "t1".into(),
                syntax_tag: "passive".into(),
                forward: "linked by {REL} to [TMARK]".into(),
                backward: "[HMARK] linked by {REL}".into(),
            },
        ])
        .unwrap();
        let t0 = &graph.triples()[0];
        let t1 = &graph.triples()[1];
        let labels = vec![
            SeedLabel { head: t0.head, relation: t0.relation, tail: t0.tail, template_id: "t0".into() },
            SeedLabel { head: t1.head, relation: t1.relation, tail: t1.tail, template_id: "t1".into() },
        ];
        let cfg = TrainConfig { em_rounds: 1, ..quick_cfg() };
        let out = train(&mut store, &graph, &idx, &rules, &labels, &cfg).unwrap();
        let gmm = out.gmm.expect("mixture fitted");
        assert_eq!(gmm.k(), 2);
        assert_eq!(out.reports.len(), 2);
    }

    #[test]
    fn multiple_templates_without_seed_labels_rejected() {
        let graph = toy_graph(8, 15);
        let mut store = toy_store(&graph, 16);
        let idx: Vec<usize> = (0..graph.triple_count()).collect();
        let rules = PromptRuleBase::new(vec![
            crate::prompt::PromptTemplate {
                id: "t0".into(),
                syntax_tag: String::new(),
                forward: "{REL} [TMARK]".into(),
                backward: "[HMARK] {REL}".into(),
            },
            crate::prompt::PromptTemplate {
                id: "t1".into(),
                syntax_tag: String::new(),
                forward: "{REL} of [TMARK]".into(),
                backward: "[HMARK] of {REL}".into(),
            },
        ])
        .unwrap();
        assert!(train(&mut store, &graph, &idx, &rules, &[], &quick_cfg()).is_err());
    }
}
