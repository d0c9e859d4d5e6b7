//! Release gate for the whole pipeline. Each test covers one agreed
//! acceptance check over the public API and prints a single pass or fail
//! line; run with `--nocapture` to see the full scoreboard.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bilink_core::el::io::save_candidate_sets;
use bilink_core::el::{
    build_all_candidates, corpus_vocab, el_evaluate, el_train, Bm25Params, CandidatePolicy,
    DomainCollection, Document, ElSynthSpec, synth_el_corpus,
};
use bilink_core::encoder::{encode, entity_plan, expression_plan, SeqPlan};
use bilink_core::eval::{
    eval_reports, evaluate, filtered_rank, metrics, write_eval_reports, EvalConfig, EvalOutcome,
    EvalSplit,
};
use bilink_core::graph::{
    graph_vocab, prepare_description, save_splits, split_transductive, synth_kg, Graph,
    RelationPattern, RelationSpec, SplitSet, SynthSpec,
};
use bilink_core::model::{EncoderSide, ModelConfig, ParamStore};
use bilink_core::nn::{grad_check4, Tape, Tensor};
use bilink_core::prompt::{
    em_fit, log_likelihood, responsibilities, verbalize, Direction, GmmState, PromptRuleBase,
    PromptTemplate,
};
use bilink_core::text::{tokenize, Vocab};
use bilink_core::train::{
    batch_loss_nodes, batch_losses, denoise, train, BatchEmbeddings, BatchNodes, TrainConfig,
};

type Check = std::result::Result<(), String>;

fn report(num: usize, label: &str, outcome: Check) {
    match &outcome {
        Ok(()) => println!("acceptance {num:02} {label}: PASS"),
        Err(why) => println!("acceptance {num:02} {label}: FAIL ({why})"),
    }
    if let Err(why) = outcome {
        panic!("acceptance {num:02} {label}: {why}");
    }
}

fn es<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}



// ---------------------------------------------------------------------------
// 01: analytic gradients of the full training loss, taken through both
// encoders, agree with central finite differences.

#[test]
fn a01_gradient_fidelity() {
    report(1, "gradient fidelity", run_gradient_fidelity());
}

fn run_gradient_fidelity() -> Check {
    let start = Instant::now();
    let spec = SynthSpec {
        entity_count: 12,
        relations: vec![
            RelationSpec {
                id: "r0".into(),
                surface: Some("bound with".into()),
                pattern: RelationPattern::Symmetric,
                density: 0.3,
            },
            RelationSpec {
                id: "r1".into(),
                surface: Some("guards".into()),
                pattern: RelationPattern::Plain,
                density: 0.25,
            },
        ],
        seed: 3,
        flavor_vocab: Vec::new(),
    };
    let graph = synth_kg(&spec).map_err(es)?;
    let vocab = graph_vocab(&graph);
    let config = ModelConfig {
        layers: 2,
        heads: 2,
        dim: 16,
        ffn_dim: 24,
        max_len: 32,
        ..ModelConfig::default()
    };
    let mut store = ParamStore::init(config, vocab, 21).map_err(es)?;
    let rules = PromptRuleBase::single_default();
    let tpl = rules.templates[0].clone();

    let descs: Vec<Vec<String>> = (0..graph.entity_count())
        .map(|e| prepare_description(&graph, e, 10))
        .collect();
    let batch: Vec<_> = graph.triples().iter().take(4).copied().collect();
    if batch.len() < 4 {
        return Err("graph too small for a four-edge batch".into());
    }
    let max_len = store.config.max_len;
    let mut plans_tf: Vec<SeqPlan> = Vec::new();
    let mut plans_tb: Vec<SeqPlan> = Vec::new();
    let mut plans_hb: Vec<SeqPlan> = Vec::new();
    let mut plans_hf: Vec<SeqPlan> = Vec::new();
    for t in &batch {
        let surface = &graph.relation(t.relation).surface;
        let fwd = verbalize(&tpl, Direction::Forward, surface);
        let bwd = verbalize(&tpl, Direction::Backward, surface);
        plans_tf.push(expression_plan(&store.vocab, &fwd, &descs[t.head], max_len).map_err(es)?);
        plans_tb.push(entity_plan(&store.vocab, &descs[t.tail], max_len).map_err(es)?);
        plans_hb.push(expression_plan(&store.vocab, &bwd, &descs[t.tail], max_len).map_err(es)?);
        plans_hf.push(entity_plan(&store.vocab, &descs[t.head], max_len).map_err(es)?);
    }
    let bare_f = verbalize(&tpl, Direction::Forward, "[PAD]");
    let bare_b = verbalize(&tpl, Direction::Backward, "[PAD]");
    let plan_tau_f = expression_plan(&store.vocab, &bare_f, &[], max_len).map_err(es)?;
    let plan_tau_b = expression_plan(&store.vocab, &bare_b, &[], max_len).map_err(es)?;

    let params: BTreeMap<String, Tensor> = store
        .trainable_main()
        .into_iter()
        .map(|k| {
            let t = store.tensors[&k].clone();
            (k, t)
        })
        .collect();
    let samples = 12usize;
    for prefix in ["expr.", "ent."] {
        let cover: usize = params
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t.numel().min(samples))
            .sum();
        if cover < 200 {
            return Err(format!(
                "only {cover} probed coordinates for tensors under {prefix}"
            ));
        }
    }

    let n = batch.len();
    let mut f = |p: &BTreeMap<String, Tensor>| {
        for (k, v) in p {
            store.tensors.insert(k.clone(), v.clone());
        }
        let mut tape = Tape::new();
        let mut t_f = Vec::with_capacity(n);
        let mut t_b = Vec::with_capacity(n);
        let mut h_b = Vec::with_capacity(n);
        let mut h_f = Vec::with_capacity(n);
        for i in 0..n {
            t_f.push(encode(&mut tape, &store, EncoderSide::Expression, &plans_tf[i]));
            t_b.push(encode(&mut tape, &store, EncoderSide::Entity, &plans_tb[i]));
            h_b.push(encode(&mut tape, &store, EncoderSide::Expression, &plans_hb[i]));
            h_f.push(encode(&mut tape, &store, EncoderSide::Entity, &plans_hf[i]));
        }
        let tau_f = encode(&mut tape, &store, EncoderSide::Expression, &plan_tau_f);
        let tau_b = encode(&mut tape, &store, EncoderSide::Expression, &plan_tau_b);
        let nodes = BatchNodes {
            h_f,
            h_b,
            t_f,
            t_b,
            h_tau_f: vec![tau_f; n],
            h_tau_b: vec![tau_b; n],
        };
        let built = batch_loss_nodes(&mut tape, &nodes, 0.5, 0.3, true);
        tape.backward(built.total);
        let loss = tape.value(built.total).scalar();
        let mut grads: BTreeMap<String, Tensor> = tape
            .param_grads()
            .map(|(k, g)| (k.to_string(), g.clone()))
            .collect();
        for (k, t) in p {
            grads
                .entry(k.clone())
                .or_insert_with(|| Tensor::from_vec(t.rows, t.cols, vec![0.0; t.numel()]));
        }
        (loss, grads)
    };
    let worst = grad_check4(&mut f, &params, 2e-4, 1e-3, samples, 9);
    if worst > 1e-6 {
        return Err(format!("worst relative gradient error {worst:.3e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 120.0 {
        return Err(format!("gradient probing took {secs:.1} s"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 02: plain EM on two separated Gaussians climbs in likelihood every round
// and recovers the clustering exactly.

#[test]
fn a02_mixture_recovery() {
    report(2, "mixture recovery", run_mixture_recovery());
}

fn run_mixture_recovery() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let gauss = |rng: &mut ChaCha8Rng| {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        (r * (2.0 * std::f64::consts::PI * u2).cos(), r * (2.0 * std::f64::consts::PI * u2).sin())
    };
    let mut data = Vec::with_capacity(500);
    let mut labels = Vec::with_capacity(500);
    for i in 0..500 {
        let (cx, cy, lab) = if i < 250 { (-3.0, -3.0, 0usize) } else { (3.0, 3.0, 1) };
        let (gx, gy) = gauss(&mut rng);
        data.push(vec![cx + 0.4 * gx, cy + 0.4 * gy]);
        labels.push(lab);
    }
    let mut state = GmmState {
        dim: 2,
        means: vec![vec![-1.0, -1.0], vec![1.0, 1.0]],
        covs: vec![vec![1.0, 0.0, 0.0, 1.0]; 2],
        priors: vec![0.5, 0.5],
        comp_template: vec!["t0".into(), "t1".into()],
    };
    let mut ll = log_likelihood(&state, &data).map_err(es)?;
    for round in 0..12 {
        state = em_fit(&state, &data, 1, 1.0).map_err(es)?;
        let next = log_likelihood(&state, &data).map_err(es)?;
        if next < ll - 1e-9 {
            return Err(format!(
                "log-likelihood fell from {ll:.6} to {next:.6} in round {round}"
            ));
        }
        ll = next;
    }
    let mut direct = 0usize;
    let mut swapped = 0usize;
    for (z, &lab) in data.iter().zip(&labels) {
        let r = responsibilities(&state, z).map_err(es)?;
        let pick = if r[1] > r[0] { 1 } else { 0 };
        if pick == lab {
            direct += 1;
        }
        if 1 - pick == lab {
            swapped += 1;
        }
    }
    let best = direct.max(swapped);
    if best != data.len() {
        return Err(format!("cluster assignment got {best} of {} points", data.len()));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("EM suite took {secs:.1} s"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 03: filtered ranking and metric aggregation match a brute-force oracle on
// random score tables, ties resolved against the gold.

#[test]
fn a03_ranking_metric_oracle() {
    report(3, "ranking metric oracle", run_ranking_metric_oracle());
}

fn run_ranking_metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ranks = Vec::with_capacity(1000);
    let mut oracle_ranks = Vec::with_capacity(1000);
    for case in 0..1000 {
        let n = rng.gen_range(2..40usize);
        let levels = rng.gen_range(1..8usize);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0..levels) as f64 * 0.37 - 1.0)
            .collect();
        let gold = rng.gen_range(0..n);
        let filter: BTreeSet<usize> =
            (0..n).filter(|&j| j != gold && rng.gen_bool(0.2)).collect();
        let table: BTreeMap<usize, f64> = scores.iter().copied().enumerate().collect();
        let got = filtered_rank(&table, gold, &filter).map_err(es)?;
        let want = 1 + (0..n)
            .filter(|&j| j != gold && !filter.contains(&j) && scores[j] >= scores[gold])
            .count();
        if got != want {
            return Err(format!(
                "case {case}: rank {got}, oracle rank {want} (n={n}, gold={gold})"
            ));
        }
        ranks.push(got);
        oracle_ranks.push(want);
    }
    let got = metrics(&ranks).map_err(es)?;
    let n = oracle_ranks.len() as f64;
    let want_mrr = oracle_ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let hits = |k: usize| oracle_ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    if got.mrr != want_mrr
        || got.hits1 != hits(1)
        || got.hits3 != hits(3)
        || got.hits10 != hits(10)
        || got.n_queries != oracle_ranks.len()
    {
        return Err("aggregated metrics disagree with the oracle".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 04: lexical candidate scoring matches the closed formula on random tiny
// corpora and reproduces the two-document worked example.

#[test]
fn a04_lexical_scoring_oracle() {
    report(4, "lexical scoring oracle", run_lexical_scoring_oracle());
}

fn oracle_bm25(docs: &[Vec<String>], di: usize, query: &[String], k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let mut score = 0.0;
    for term in query {
        let tf = docs[di].iter().filter(|t| *t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let dl = docs[di].len() as f64;
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    score
}

fn run_lexical_scoring_oracle() -> Check {
    let pool = [
        "ash", "birch", "cedar", "dune", "elm", "fern", "grove", "heath", "iris", "juniper",
    ];
    for corpus in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + corpus);
        let n_docs = rng.gen_range(2..8usize);
        let mut token_docs = Vec::with_capacity(n_docs);
        let mut docs = Vec::with_capacity(n_docs);
        for i in 0..n_docs {
            let len = rng.gen_range(2..10usize);
            let toks: Vec<String> =
                (0..len).map(|_| pool[rng.gen_range(0..pool.len())].to_string()).collect();
            docs.push(Document {
                entity_id: format!("d{i}"),
                domain: "w".into(),
                title: String::new(),
                body: toks.join(" "),
            });
            token_docs.push(toks);
        }
        let collection = DomainCollection::build("w", docs).map_err(es)?;
        let q_len = rng.gen_range(1..5usize);
        let query: Vec<String> =
            (0..q_len).map(|_| pool[rng.gen_range(0..pool.len())].to_string()).collect();
        let params = Bm25Params { k1: 0.6 + 1.4 * rng.gen_range(0.0..1.0), b: rng.gen_range(0.0..1.0) };
        for i in 0..n_docs {
            let got = collection
                .bm25_score(&query, &format!("d{i}"), &params)
                .map_err(es)?;
            let want = oracle_bm25(&token_docs, i, &query, params.k1, params.b);
            if (got - want).abs() > 1e-9 {
                return Err(format!(
                    "corpus {corpus} doc {i}: score {got}, oracle {want}"
                ));
            }
        }
    }

    let docs = vec![
        Document {
            entity_id: "d1".into(),
            domain: "w".into(),
            title: String::new(),
            body: "red apple".into(),
        },
        Document {
            entity_id: "d2".into(),
            domain: "w".into(),
            title: String::new(),
            body: "red red wine".into(),
        },
    ];
    let collection = DomainCollection::build("w", docs).map_err(es)?;
    let got = collection
        .bm25_score(&["red".to_string()], "d1", &Bm25Params::default())
        .map_err(es)?;
    if (got - 0.19856).abs() > 1e-5 {
        return Err(format!("worked example scored {got}, expected 0.19856"));
    }
    if (got - 0.19856803215183168).abs() > 1e-12 {
        return Err(format!("worked example drifted from the exact value: {got}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 05 and 06 share three trained models over a structured synthetic graph.

struct KgRun {
    seed: u64,
    graph: Graph,
    splits: SplitSet,
    vocab: Vocab,
    sym_rel: usize,
    trained: EvalOutcome,
    untrained: EvalOutcome,
    train_secs: f64,
}

fn kg_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        entity_count: 200,
        relations: vec![
            RelationSpec {
                id: "r0".into(),
                surface: Some("bound with".into()),
                pattern: RelationPattern::Symmetric,
                density: 0.0167,
            },
            RelationSpec {
                id: "r1".into(),
                surface: Some("guards".into()),
                pattern: RelationPattern::Plain,
                density: 0.0167,
            },
            RelationSpec {
                id: "r2".into(),
                surface: Some("guarded by".into()),
                pattern: RelationPattern::InverseOf { of: "r1".into() },
                density: 0.0167,
            },
        ],
        seed,
        flavor_vocab: Vec::new(),
    }
}

fn kg_run(seed: u64) -> KgRun {
    let graph = synth_kg(&kg_spec(seed)).expect("graph generation");
    let vocab = graph_vocab(&graph);
    let splits = split_transductive(&graph, (0.8, 0.1, 0.1), seed).expect("split");
    let rules = PromptRuleBase::single_default();
    let mut store =
        ParamStore::init(ModelConfig::default(), vocab.clone(), seed).expect("store init");
    let cfg = TrainConfig { seed, ..TrainConfig::default() };
    let t0 = Instant::now();
    train(&mut store, &graph, &splits.train, &rules, &[], &cfg).expect("training");
    let train_secs = t0.elapsed().as_secs_f64();
    let eval_cfg = EvalConfig::default();
    let trained = evaluate(&store, &graph, &splits, EvalSplit::Test, &rules, None, &eval_cfg)
        .expect("evaluation");
    let fresh =
        ParamStore::init(ModelConfig::default(), vocab.clone(), seed + 100).expect("fresh store");
    let untrained = evaluate(&fresh, &graph, &splits, EvalSplit::Test, &rules, None, &eval_cfg)
        .expect("baseline evaluation");
    let sym_rel = graph.relation_idx("r0").expect("symmetric relation");
    KgRun { seed, graph, splits, vocab, sym_rel, trained, untrained, train_secs }
}

static KG_RUNS: LazyLock<Vec<KgRun>> = LazyLock::new(|| (0..3).map(kg_run).collect());

#[test]
fn a05_synthetic_graph_learning() {
    report(5, "synthetic graph learning", run_synthetic_graph_learning());
}

fn run_synthetic_graph_learning() -> Check {
    for run in KG_RUNS.iter() {
        let m = &run.trained.mean;
        let u = &run.untrained.mean;
        if run.train_secs > 600.0 {
            return Err(format!("seed {}: training took {:.0} s", run.seed, run.train_secs));
        }
        if m.hits10 < 0.9 || m.mrr < 0.6 {
            return Err(format!(
                "seed {}: trained hits@10 {:.3}, MRR {:.3}",
                run.seed, m.hits10, m.mrr
            ));
        }
        if u.hits10 > 0.2 {
            return Err(format!(
                "seed {}: untrained baseline hits@10 {:.3} is too strong",
                run.seed, u.hits10
            ));
        }
    }
    Ok(())
}

fn relation_hits1(outcome: &EvalOutcome, relation: usize) -> std::result::Result<f64, String> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for q in outcome.forward_queries.iter().chain(&outcome.backward_queries) {
        let rel: usize = q
            .key
            .rsplit(':')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("unparseable query key {}", q.key))?;
        if rel == relation {
            total += 1;
            if q.rank == 1 {
                hit += 1;
            }
        }
    }
    if total == 0 {
        return Err("no queries over the symmetric relation".into());
    }
    Ok(hit as f64 / total as f64)
}

#[test]
fn a06_bidirectional_advantage() {
    report(6, "bidirectional advantage", run_bidirectional_advantage());
}

fn run_bidirectional_advantage() -> Check {
    let rules = PromptRuleBase::single_default();
    for run in KG_RUNS.iter() {
        let full = relation_hits1(&run.trained, run.sym_rel)?;
        let mut store =
            ParamStore::init(ModelConfig::default(), run.vocab.clone(), run.seed).map_err(es)?;
        let cfg = TrainConfig {
            beta: 0.0,
            backward_branch: false,
            seed: run.seed,
            ..TrainConfig::default()
        };
        train(&mut store, &run.graph, &run.splits.train, &rules, &[], &cfg).map_err(es)?;
        let outcome = evaluate(
            &store,
            &run.graph,
            &run.splits,
            EvalSplit::Test,
            &rules,
            None,
            &EvalConfig::default(),
        )
        .map_err(es)?;
        let ablated = relation_hits1(&outcome, run.sym_rel)?;
        if ablated >= full {
            return Err(format!(
                "seed {}: one-directional hits@1 {ablated:.3} is not below the full model's {full:.3}",
                run.seed
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 07: a relation whose two template readings differ only in the marker
// verbalizes identically in both directions, for every symmetric edge.

#[test]
fn a07_symmetric_template_identity() {
    report(7, "symmetric template identity", run_symmetric_template_identity());
}

fn run_symmetric_template_identity() -> Check {
    let spec = SynthSpec {
        entity_count: 40,
        relations: vec![RelationSpec {
            id: "r0".into(),
            surface: Some("bound with".into()),
            pattern: RelationPattern::Symmetric,
            density: 0.1,
        }],
        seed: 7,
        flavor_vocab: Vec::new(),
    };
    let graph = synth_kg(&spec).map_err(es)?;
    let tpl = PromptTemplate {
        id: "sym".into(),
        syntax_tag: String::new(),
        forward: "{REL} [TMARK]".into(),
        backward: "{REL} [HMARK]".into(),
    };
    PromptRuleBase::new(vec![tpl.clone()]).map_err(es)?;
    let canon = |tokens: Vec<String>| -> String {
        tokens
            .into_iter()
            .map(|t| if t == "[TMARK]" || t == "[HMARK]" { "[MARK]".to_string() } else { t })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut checked = 0usize;
    for t in graph.triples() {
        let surface = &graph.relation(t.relation).surface;
        let fwd = canon(verbalize(&tpl, Direction::Forward, surface));
        let bwd = canon(verbalize(&tpl, Direction::Backward, surface));
        if fwd != bwd {
            return Err(format!("edge verbalizations diverge: {fwd:?} vs {bwd:?}"));
        }
        checked += 1;
    }
    if checked == 0 {
        return Err("no symmetric edges generated".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 08: the loss decomposes exactly, degenerates to log n on an
// all-identical batch, and zero-template denoising is a bitwise no-op.

#[test]
fn a08_loss_identities() {
    report(8, "loss identities", run_loss_identities());
}

fn run_loss_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dim = 8;
    let n = 6;
    let mat = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    };
    let be = BatchEmbeddings {
        h_f: mat(&mut rng),
        h_b: mat(&mut rng),
        t_f: mat(&mut rng),
        t_b: mat(&mut rng),
        h_tau_f: mat(&mut rng),
        h_tau_b: mat(&mut rng),
    };
    let r = batch_losses(&be, 0.07, 0.3).map_err(es)?;
    if (r.total - (r.l1 + r.l2 + 0.3 * r.l3)).abs() > 1e-12 {
        return Err(format!(
            "total {} drifts from l1 + l2 + beta*l3 = {}",
            r.total,
            r.l1 + r.l2 + 0.3 * r.l3
        ));
    }

    for m in [2usize, 4] {
        let v = vec![0.3, -1.2, 0.7];
        let zero = vec![0.0; 3];
        let same = BatchEmbeddings {
            h_f: vec![v.clone(); m],
            h_b: vec![v.clone(); m],
            t_f: vec![v.clone(); m],
            t_b: vec![v.clone(); m],
            h_tau_f: vec![zero.clone(); m],
            h_tau_b: vec![zero.clone(); m],
        };
        let r = batch_losses(&same, 0.05, 0.1).map_err(es)?;
        let log_m = (m as f64).ln();
        if r.l1 != log_m || r.l2 != log_m {
            return Err(format!("identical batch gave l1 {} l2 {}, expected ln {m}", r.l1, r.l2));
        }
    }

    let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let y = denoise(&x, &vec![0.0; 16]);
    if !x.iter().zip(&y).all(|(a, b)| a.to_bits() == b.to_bits()) {
        return Err("zero-template denoising changed at least one bit".into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 09: the linking pipeline keeps its candidate-set contract, an untrained
// ranker sits at the uniform expectation, and twenty epochs of training at
// least double it on every seed.

#[test]
fn a09_entity_linking_pipeline() {
    report(9, "entity linking pipeline", run_entity_linking_pipeline());
}

fn run_entity_linking_pipeline() -> Check {
    let spec = ElSynthSpec {
        domains: 5,
        entities_per_domain: 125,
        mentions_per_entity: 2,
        classes: 16,
        seed: 900,
    };
    let (docs, mentions) = synth_el_corpus(&spec).map_err(es)?;
    let mut by_domain: BTreeMap<String, Vec<Document>> = BTreeMap::new();
    for d in &docs {
        by_domain.entry(d.domain.clone()).or_default().push(d.clone());
    }
    let mut collections = BTreeMap::new();
    for (domain, group) in by_domain {
        collections.insert(domain.clone(), DomainCollection::build(&domain, group).map_err(es)?);
    }
    let policy = CandidatePolicy::default();
    let sets = build_all_candidates(&mentions, &collections, &policy, 900).map_err(es)?;
    if sets.len() != mentions.len() {
        return Err(format!(
            "{} of {} mentions kept a candidate set",
            sets.len(),
            mentions.len()
        ));
    }
    for set in &sets {
        set.check(64).map_err(es)?;
    }
    for (m, set) in mentions.iter().zip(&sets) {
        let collection = &collections[&m.domain];
        let gold_idx = collection
            .doc_index(set.gold_id())
            .ok_or_else(|| format!("gold {} missing from its domain", set.gold_id()))?;
        let gold_title = tokenize(&collection.doc(gold_idx).title);
        if gold_title.is_empty() {
            return Err(format!("mention {}: gold has an empty title", m.mention_id));
        }
        for cand in &set.candidates {
            let body = collection.scrubbed_body_of(&cand.entity_id).map_err(es)?;
            let leaked = body
                .windows(gold_title.len())
                .any(|w| w == gold_title.as_slice());
            if leaked {
                return Err(format!(
                    "mention {}: gold title appears in candidate {}",
                    m.mention_id, cand.entity_id
                ));
            }
        }
    }

    let config = ModelConfig {
        layers: 1,
        heads: 2,
        dim: 16,
        ffn_dim: 32,
        max_len: 32,
        ..ModelConfig::default()
    };
    let vocab = corpus_vocab(&docs, &mentions);
    let probe = &mentions[..1000];
    let fresh = ParamStore::init(config.clone(), vocab.clone(), 1700).map_err(es)?;
    let untrained = el_evaluate(&fresh, probe, &sets, &collections).map_err(es)?;
    if untrained.n_queries != 1000 {
        return Err(format!("untrained pass ranked {} mentions", untrained.n_queries));
    }
    if (untrained.mrr - 0.0742).abs() > 0.02 {
        return Err(format!(
            "untrained MRR {:.4} sits outside 0.0742 +/- 0.02",
            untrained.mrr
        ));
    }

    for seed in [91u64, 92, 93] {
        let mut store = ParamStore::init(config.clone(), vocab.clone(), seed).map_err(es)?;
        let cfg = TrainConfig {
            lr: 3e-3,
            warmup_steps: 40,
            epochs: 20,
            batch_size: 32,
            seed,
            ..TrainConfig::default()
        };
        el_train(&mut store, &mentions, &sets, &collections, &cfg).map_err(es)?;
        let trained = el_evaluate(&store, probe, &sets, &collections).map_err(es)?;
        if trained.mrr < 2.0 * untrained.mrr {
            return Err(format!(
                "seed {seed}: trained MRR {:.4} is under twice the untrained {:.4}",
                trained.mrr, untrained.mrr
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// 10: the full pipeline is bitwise reproducible: splits, candidate sets,
// and evaluation reports come out identical across two runs.

#[test]
fn a10_full_run_determinism() {
    report(10, "end to end determinism", run_full_run_determinism());
}

fn pipeline_artifacts(dir: &std::path::Path) -> std::result::Result<Vec<Vec<u8>>, String> {
    let graph = synth_kg(&SynthSpec {
        entity_count: 30,
        relations: vec![
            RelationSpec {
                id: "r0".into(),
                surface: Some("bound with".into()),
                pattern: RelationPattern::Symmetric,
                density: 0.15,
            },
            RelationSpec {
                id: "r1".into(),
                surface: Some("guards".into()),
                pattern: RelationPattern::Plain,
                density: 0.1,
            },
        ],
        seed: 4,
        flavor_vocab: Vec::new(),
    })
    .map_err(es)?;
    let splits = split_transductive(&graph, (0.8, 0.1, 0.1), 4).map_err(es)?;
    let splits_path = dir.join("splits.json");
    save_splits(&splits, &splits_path).map_err(es)?;

    let rules = PromptRuleBase::single_default();
    let config = ModelConfig {
        layers: 1,
        heads: 2,
        dim: 16,
        ffn_dim: 32,
        max_len: 32,
        ..ModelConfig::default()
    };
    let mut store = ParamStore::init(config, graph_vocab(&graph), 4).map_err(es)?;
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        warmup_steps: 4,
        seed: 4,
        ..TrainConfig::default()
    };
    train(&mut store, &graph, &splits.train, &rules, &[], &cfg).map_err(es)?;
    let outcome = evaluate(
        &store,
        &graph,
        &splits,
        EvalSplit::Test,
        &rules,
        None,
        &EvalConfig { k: 10, ..EvalConfig::default() },
    )
    .map_err(es)?;
    let report_path = dir.join("eval.json");
    write_eval_reports(&report_path, &eval_reports(&outcome, "test", "fixed")).map_err(es)?;

    let (docs, mentions) = synth_el_corpus(&ElSynthSpec {
        domains: 2,
        entities_per_domain: 8,
        mentions_per_entity: 2,
        classes: 4,
        seed: 4,
    })
    .map_err(es)?;
    let mut collections = BTreeMap::new();
    for domain in ["dom0", "dom1"] {
        let group: Vec<Document> =
            docs.iter().filter(|d| d.domain == domain).cloned().collect();
        collections.insert(domain.to_string(), DomainCollection::build(domain, group).map_err(es)?);
    }
    let policy = CandidatePolicy { k: 6, ..CandidatePolicy::default() };
    let sets = build_all_candidates(&mentions, &collections, &policy, 4).map_err(es)?;
    let sets_path = dir.join("candidates.jsonl");
    save_candidate_sets(&sets_path, &sets).map_err(es)?;

    let mut artifacts = Vec::new();
    for p in [&splits_path, &report_path, &sets_path] {
        artifacts.push(std::fs::read(p).map_err(es)?);
    }
    Ok(artifacts)
}

fn run_full_run_determinism() -> Check {
    let dir_a = tempfile::tempdir().map_err(es)?;
    let dir_b = tempfile::tempdir().map_err(es)?;
    let a = pipeline_artifacts(dir_a.path())?;
    let b = pipeline_artifacts(dir_b.path())?;
    for (name, (x, y)) in ["splits", "eval report", "candidate sets"].iter().zip(a.iter().zip(&b)) {
        if x != y {
            return Err(format!("{name} differ between two identical runs"));
        }
    }
    Ok(())
}
