//! Gaussian mixture machinery for probabilistic template selection.
//!
//! Responsibilities are computed in log space; every covariance carries a
//! small ridge so Cholesky factorization stays well-posed. A component that
//! collapses during an M step is reseeded to the data point the remaining
//! components explain worst, which keeps refits deterministic.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{BiLinkError, Result};
use crate::graph::Graph;
use crate::model::ParamStore;
use crate::prompt::gtheta::embed_expression;
use crate::prompt::template::{Direction, PromptRuleBase, PromptTemplate, SeedLabel};

pub const EPS_REG: f64 = 1e-6;
const DEGENERATE_RESP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmState {
    pub dim: usize,
    pub means: Vec<Vec<f64>>,
    /// Row-major `dim x dim` covariance per component.
    pub covs: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    /// Component index to template id, fixed at initialization.
    pub comp_template: Vec<String>,
}

impl GmmState {
    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(BiLinkError::Config("mixture needs at least one component".into()));
        }
        if self.covs.len() != k || self.priors.len() != k || self.comp_template.len() != k {
            return Err(BiLinkError::Config("mixture field lengths disagree".into()));
        }
        let sum: f64 = self.priors.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.priors.iter().any(|p| *p < 0.0) {
            return Err(BiLinkError::Numeric(format!("priors sum to {sum}, not 1")));
        }
        for (i, m) in self.means.iter().enumerate() {
            if m.len() != self.dim || self.covs[i].len() != self.dim * self.dim {
                return Err(BiLinkError::Config(format!("component {i} has wrong dimensions")));
            }
        }
        Ok(())
    }
}

struct CompEval {
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

fn factor(cov: &[f64], dim: usize) -> Result<CompEval> {
    let mut ridge = 0.0;
    for _ in 0..4 {
        let mut m = DMatrix::from_row_slice(dim, dim, cov);
        for i in 0..dim {
            m[(i, i)] += ridge;
        }
        if let Some(chol) = Cholesky::new(m) {
            let logdet: f64 = (0..dim).map(|i| chol.l()[(i, i)].ln()).sum::<f64>() * 2.0;
            let log_norm = -0.5 * (dim as f64 * (2.0 * std::f64::consts::PI).ln() + logdet);
            return Ok(CompEval { chol, log_norm });
        }
        ridge = if ridge == 0.0 { EPS_REG } else { ridge * 100.0 };
    }
    Err(BiLinkError::Numeric(
        "covariance is not positive definite even after ridging".into(),
    ))
}

fn evals(state: &GmmState) -> Result<Vec<CompEval>> {
    state
        .covs
        .iter()
        .map(|c| factor(c, state.dim))
        .collect()
}

fn log_density_with(eval: &CompEval, mean: &[f64], z: &[f64]) -> f64 {
    let diff = DVector::from_iterator(z.len(), z.iter().zip(mean).map(|(a, b)| a - b));
    let solved = eval.chol.l().solve_lower_triangular(&diff).expect("triangular solve");
    eval.log_norm - 0.5 * solved.norm_squared()
}

/// Log of the full mixture density at `z`.
pub fn log_mixture_density(state: &GmmState, z: &[f64]) -> Result<f64> {
    let evals = evals(state)?;
    let logs: Vec<f64> = (0..state.k())
        .map(|k| state.priors[k].ln() + log_density_with(&evals[k], &state.means[k], z))
        .collect();
    Ok(log_sum_exp(&logs))
}

/// Posterior component probabilities for one embedding.
pub fn responsibilities(state: &GmmState, z: &[f64]) -> Result<Vec<f64>> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(BiLinkError::Numeric("non-finite embedding passed to mixture".into()));
    }
    if z.len() != state.dim {
        return Err(BiLinkError::Config(format!(
            "embedding dim {} does not match mixture dim {}",
            z.len(),
            state.dim
        )));
    }
    let evals = evals(state)?;
    let logs: Vec<f64> = (0..state.k())
        .map(|k| state.priors[k].ln() + log_density_with(&evals[k], &state.means[k], z))
        .collect();
    let total = log_sum_exp(&logs);
    Ok(logs.iter().map(|l| (l - total).exp()).collect())
}

/// Concentrates a responsibility vector toward its top entries:
/// `r_k^(1/T)`, renormalized. `T = 1` is the identity.
pub fn sharpen(r: &[f64], t_sharp: f64) -> Vec<f64> {
    assert!(
        t_sharp > 0.0 && t_sharp <= 1.0,
        "sharpening temperature must lie in (0, 1]"
    );
    let powed: Vec<f64> = r.iter().map(|v| v.powf(1.0 / t_sharp)).collect();
    let sum: f64 = powed.iter().sum();
    powed.iter().map(|v| v / sum).collect()
}

/// Responsibility-weighted mean/covariance/prior update. `resp` is one row
/// per data point, each row on the simplex.
pub fn m_step(state: &GmmState, data: &[Vec<f64>], resp: &[Vec<f64>]) -> Result<GmmState> {
    let n = data.len();
    let k = state.k();
    let d = state.dim;
    if n == 0 {
        return Err(BiLinkError::Batch("m_step needs at least one data point".into()));
    }
    if resp.len() != n || resp.iter().any(|r| r.len() != k) {
        return Err(BiLinkError::Batch("responsibility matrix shape mismatch".into()));
    }
    let mut col_sums = vec![0.0; k];
    for row in resp {
        for (c, v) in col_sums.iter_mut().zip(row) {
            *c += v;
        }
    }
    let mut means = vec![vec![0.0; d]; k];
    let mut covs = vec![vec![0.0; d * d]; k];
    let mut priors = vec![0.0; k];
    let degenerate: Vec<usize> = (0..k).filter(|&c| col_sums[c] < DEGENERATE_RESP).collect();
    for c in 0..k {
        if degenerate.contains(&c) {
            continue;
        }
        for (i, z) in data.iter().enumerate() {
            let w = resp[i][c];
            for (m, v) in means[c].iter_mut().zip(z) {
                *m += w * v;
            }
        }
        for m in means[c].iter_mut() {
            *m /= col_sums[c];
        }
        for (i, z) in data.iter().enumerate() {
            let w = resp[i][c];
            for a in 0..d {
                let da = z[a] - means[c][a];
                for b in a..d {
                    covs[c][a * d + b] += w * da * (z[b] - means[c][b]);
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = covs[c][a * d + b] / col_sums[c] + if a == b { EPS_REG } else { 0.0 };
                covs[c][a * d + b] = v;
                covs[c][b * d + a] = v;
            }
        }
        priors[c] = col_sums[c] / n as f64;
    }
    if !degenerate.is_empty() {
        let healthy: Vec<usize> = (0..k).filter(|c| !degenerate.contains(c)).collect();
        let old_evals = evals(state)?;
        let global = global_covariance(data, d);
        for &c in &degenerate {
            let seed_idx = if healthy.is_empty() {
                c % n
            } else {
                // The point the surviving components explain worst.
                let mut worst = 0;
                let mut worst_score = f64::INFINITY;
                for (i, z) in data.iter().enumerate() {
                    let score = healthy
                        .iter()
                        .map(|&h| {
                            state.priors[h].ln()
                                + log_density_with(&old_evals[h], &state.means[h], z)
                        })
                        .fold(f64::NEG_INFINITY, f64::max);
                    if score < worst_score {
                        worst_score = score;
                        worst = i;
                    }
                }
                worst
            };
            warn!("mixture component {c} collapsed; reseeding to data point {seed_idx}");
            means[c] = data[seed_idx].clone();
            covs[c] = global.clone();
            priors[c] = 1.0 / n as f64;
        }
        let total: f64 = priors.iter().sum();
        for p in priors.iter_mut() {
            *p /= total;
        }
    }
    let next = GmmState {
        dim: d,
        means,
        covs,
        priors,
        comp_template: state.comp_template.clone(),
    };
    next.validate()?;
    Ok(next)
}

fn global_covariance(data: &[Vec<f64>], d: usize) -> Vec<f64> {
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for z in data {
        for (m, v) in mean.iter_mut().zip(z) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for z in data {
        for a in 0..d {
            let da = z[a] - mean[a];
            for b in a..d {
                cov[a * d + b] += da * (z[b] - mean[b]) / n;
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] + if a == b { EPS_REG } else { 0.0 };
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    cov
}

/// Alternates responsibilities, sharpening, and M steps for `rounds`
/// iterations.
pub fn em_fit(state: &GmmState, data: &[Vec<f64>], rounds: usize, t_sharp: f64) -> Result<GmmState> {
    if rounds == 0 {
        return Err(BiLinkError::Config("em_fit needs at least one round".into()));
    }
    let mut current = state.clone();
    for _ in 0..rounds {
        let resp: Result<Vec<Vec<f64>>> = data
            .iter()
            .map(|z| responsibilities(&current, z).map(|r| sharpen(&r, t_sharp)))
            .collect();
        current = m_step(&current, data, &resp?)?;
    }
    Ok(current)
}

/// Total data log-likelihood under the mixture.
pub fn log_likelihood(state: &GmmState, data: &[Vec<f64>]) -> Result<f64> {
    let evals = evals(state)?;
    let mut total = 0.0;
    for z in data {
        let logs: Vec<f64> = (0..state.k())
            .map(|k| state.priors[k].ln() + log_density_with(&evals[k], &state.means[k], z))
            .collect();
        total += log_sum_exp(&logs);
    }
    Ok(total)
}

/// Supervised initialization: one component per distinct labeled template,
/// ordered by template id.
pub fn init_gmm_from_labeled(labeled: &[(Vec<f64>, String)]) -> Result<GmmState> {
    if labeled.is_empty() {
        return Err(BiLinkError::Config("seed set holds no labeled edges".into()));
    }
    let d = labeled[0].0.len();
    if labeled.iter().any(|(z, _)| z.len() != d) {
        return Err(BiLinkError::Config("labeled embeddings disagree on dimension".into()));
    }
    let mut ids: Vec<String> = labeled.iter().map(|(_, t)| t.clone()).collect();
    ids.sort();
    ids.dedup();
    let mut means = Vec::with_capacity(ids.len());
    let mut covs = Vec::with_capacity(ids.len());
    let mut priors = Vec::with_capacity(ids.len());
    for id in &ids {
        let members: Vec<&Vec<f64>> = labeled
            .iter()
            .filter(|(_, t)| t == id)
            .map(|(z, _)| z)
            .collect();
        let nk = members.len() as f64;
        let mut mean = vec![0.0; d];
        for z in &members {
            for (m, v) in mean.iter_mut().zip(z.iter()) {
                *m += v / nk;
            }
        }
        let mut cov = vec![0.0; d * d];
        if members.len() == 1 {
            warn!("template {id} has a single labeled edge; covariance falls back to the ridge");
        } else {
            for z in &members {
                for a in 0..d {
                    let da = z[a] - mean[a];
                    for b in a..d {
                        cov[a * d + b] += da * (z[b] - mean[b]) / nk;
                    }
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[a * d + b] + if a == b { EPS_REG } else { 0.0 };
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
        }
        means.push(mean);
        covs.push(cov);
        priors.push(nk / labeled.len() as f64);
    }
    let state = GmmState {
        dim: d,
        means,
        covs,
        priors,
        comp_template: ids,
    };
    state.validate()?;
    Ok(state)
}

/// Embeds every seed-labeled edge and initializes the mixture from the
/// per-template statistics.
pub fn init_gmm_from_seed(
    store: &ParamStore,
    graph: &Graph,
    labels: &[SeedLabel],
    rules: &PromptRuleBase,
) -> Result<GmmState> {
    let mut labeled = Vec::with_capacity(labels.len());
    for l in labels {
        let template = rules.require(&l.template_id)?;
        let z = embed_expression(store, graph, l.head, l.relation, template, Direction::Forward)?;
        labeled.push((z, l.template_id.clone()));
    }
    init_gmm_from_labeled(&labeled)
}

/// Chooses a template for candidate embeddings `(template id, z)`: take the
/// candidate with the highest mixture density, then the template of its
/// argmax-responsibility component; all ties break toward the lower
/// template id.
pub fn select_from_candidates<'a>(
    state: &GmmState,
    zs: &[(String, Vec<f64>)],
    rules: &'a PromptRuleBase,
) -> Result<&'a PromptTemplate> {
    assert!(!zs.is_empty(), "no candidate embeddings");
    let mut best: Option<(f64, &String, &Vec<f64>)> = None;
    for (id, z) in zs {
        let density = log_mixture_density(state, z)?;
        let better = match &best {
            None => true,
            Some((bd, bid, _)) => density > *bd || (density == *bd && id < *bid),
        };
        if better {
            best = Some((density, id, z));
        }
    }
    let (_, _, z) = best.expect("nonempty candidates");
    let r = responsibilities(state, z)?;
    let mut comp = 0;
    for c in 1..state.k() {
        let better = r[c] > r[comp]
            || (r[c] == r[comp] && state.comp_template[c] < state.comp_template[comp]);
        if better {
            comp = c;
        }
    }
    rules.require(&state.comp_template[comp])
}

/// Per-edge template choice for one direction.
pub fn select_template<'a>(
    state: &GmmState,
    store: &ParamStore,
    graph: &Graph,
    entity: usize,
    relation: usize,
    rules: &'a PromptRuleBase,
    direction: Direction,
) -> Result<&'a PromptTemplate> {
    let mut zs = Vec::with_capacity(rules.len());
    for t in &rules.templates {
        let z = embed_expression(store, graph, entity, relation, t, direction)?;
        zs.push((t.id.clone(), z));
    }
    select_from_candidates(state, &zs, rules)
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}
