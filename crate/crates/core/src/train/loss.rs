//! Contrastive batch losses.
//!
//! The pure slice-based functions here are the reference arithmetic; the
//! tape builder mirrors them node for node so training gradients flow
//! through exactly the same expressions.

use serde::{Deserialize, Serialize};

use crate::error::{BiLinkError, Result};
use crate::nn::{NodeId, Tape};

/// Scaled cosine similarity `cos(x, y) / t`.
pub fn cosine_sim(x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(BiLinkError::Numeric(format!("temperature {t} must be positive")));
    }
    if x.len() != y.len() {
        return Err(BiLinkError::Numeric("cosine inputs differ in dimension".into()));
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(BiLinkError::Numeric("cosine of a zero-norm vector".into()));
    }
    Ok(dot / (nx * ny) / t)
}

/// Subtracts the template embedding from an expression embedding.
pub fn denoise(h: &[f64], h_tau: &[f64]) -> Vec<f64> {
    assert_eq!(h.len(), h_tau.len(), "denoise inputs differ in dimension");
    h.iter().zip(h_tau).map(|(a, b)| a - b).collect()
}

/// One training batch's pooled vectors. `t_f` and `h_b` are the raw
/// relational expressions; denoising happens inside the loss. `h_tau_f` and
/// `h_tau_b` hold each example's selected template embedding per direction.
#[derive(Debug, Clone)]
pub struct BatchEmbeddings {
    pub h_f: Vec<Vec<f64>>,
    pub h_b: Vec<Vec<f64>>,
    pub t_f: Vec<Vec<f64>>,
    pub t_b: Vec<Vec<f64>>,
    pub h_tau_f: Vec<Vec<f64>>,
    pub h_tau_b: Vec<Vec<f64>>,
}

impl BatchEmbeddings {
    pub fn len(&self) -> usize {
        self.t_f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_f.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        if n < 2 {
            return Err(BiLinkError::Batch(format!("loss needs a batch of at least 2, got {n}")));
        }
        let fields = [&self.h_f, &self.h_b, &self.t_b, &self.h_tau_f, &self.h_tau_b];
        if fields.iter().any(|f| f.len() != n) {
            return Err(BiLinkError::Batch("batch fields differ in length".into()));
        }
        let d = self.t_f[0].len();
        let uniform = self
            .t_f
            .iter()
            .chain(fields.iter().flat_map(|f| f.iter()))
            .all(|v| v.len() == d);
        if !uniform {
            return Err(BiLinkError::Batch("batch vectors differ in dimension".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    pub temperature: f64,
    pub beta: f64,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log_sum_exp(sims) - sims[i]`, computed on the shifted scores so a batch
/// of equal similarities yields `ln n` with no rounding residue.
fn nll_term(sims: &[f64], i: usize) -> f64 {
    let shifted: Vec<f64> = sims.iter().map(|s| s - sims[i]).collect();
    log_sum_exp(&shifted)
}

/// The three contrastive terms and their weighted sum.
///
/// `l1` anchors each tail description against every denoised forward
/// expression in the batch, `l2` anchors each head description against every
/// denoised backward expression, and `l3` is a repulsion penalty on
/// cross-example expression pairs.
pub fn batch_losses(be: &BatchEmbeddings, t: f64, beta: f64) -> Result<LossReport> {
    be.check()?;
    if beta < 0.0 {
        return Err(BiLinkError::Config(format!("beta {beta} must be nonnegative")));
    }
    let n = be.len();
    let that_f: Vec<Vec<f64>> = (0..n).map(|j| denoise(&be.t_f[j], &be.h_tau_f[j])).collect();
    let hhat_b: Vec<Vec<f64>> = (0..n).map(|j| denoise(&be.h_b[j], &be.h_tau_b[j])).collect();

    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for i in 0..n {
        let sims1: Vec<f64> = (0..n)
            .map(|j| cosine_sim(&be.t_b[i], &that_f[j], t))
            .collect::<Result<_>>()?;
        l1 += nll_term(&sims1, i);
        let sims2: Vec<f64> = (0..n)
            .map(|j| cosine_sim(&be.h_f[i], &hhat_b[j], t))
            .collect::<Result<_>>()?;
        l2 += nll_term(&sims2, i);
    }
    l1 /= n as f64;
    l2 /= n as f64;

    let mut cross = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                cross.push(cosine_sim(&hhat_b[i], &that_f[j], t)?);
            }
        }
    }
    let l3 = log_sum_exp(&cross);

    Ok(LossReport {
        l1,
        l2,
        l3,
        total: l1 + l2 + beta * l3,
        temperature: t,
        beta,
    })
}

/// Leaf nodes for one batch on a loss tape, mirroring [`BatchEmbeddings`].
pub struct BatchNodes {
    pub h_f: Vec<NodeId>,
    pub h_b: Vec<NodeId>,
    pub t_f: Vec<NodeId>,
    pub t_b: Vec<NodeId>,
    pub h_tau_f: Vec<NodeId>,
    pub h_tau_b: Vec<NodeId>,
}

pub struct LossNodes {
    pub l1: NodeId,
    pub l2: Option<NodeId>,
    pub l3: Option<NodeId>,
    pub total: NodeId,
}

/// Builds the loss graph over already-encoded leaves. `backward_branch`
/// off drops `l2` entirely; `beta = 0` drops `l3`.
pub fn batch_loss_nodes(
    tape: &mut Tape,
    nodes: &BatchNodes,
    t: f64,
    beta: f64,
    backward_branch: bool,
) -> LossNodes {
    let n = nodes.t_f.len();
    assert!(n >= 2, "loss needs a batch of at least 2");
    let that_f: Vec<NodeId> = (0..n).map(|j| tape.sub(nodes.t_f[j], nodes.h_tau_f[j])).collect();

    let mut terms1 = Vec::with_capacity(n);
    for i in 0..n {
        let sims: Vec<NodeId> = (0..n)
            .map(|j| tape.cos_sim_scaled(nodes.t_b[i], that_f[j], t))
            .collect();
        let row = tape.concat_cols(&sims);
        let lse = tape.log_sum_exp(row);
        terms1.push(tape.sub(lse, sims[i]));
    }
    let l1 = tape.mean_vars(&terms1);
    let mut total = l1;

    let mut l2 = None;
    let mut l3 = None;
    if backward_branch {
        let hhat_b: Vec<NodeId> =
            (0..n).map(|j| tape.sub(nodes.h_b[j], nodes.h_tau_b[j])).collect();
        let mut terms2 = Vec::with_capacity(n);
        for i in 0..n {
            let sims: Vec<NodeId> = (0..n)
                .map(|j| tape.cos_sim_scaled(nodes.h_f[i], hhat_b[j], t))
                .collect();
            let row = tape.concat_cols(&sims);
            let lse = tape.log_sum_exp(row);
            terms2.push(tape.sub(lse, sims[i]));
        }
        let l2_id = tape.mean_vars(&terms2);
        total = tape.add(total, l2_id);
        l2 = Some(l2_id);

        if beta > 0.0 {
            let mut cross = Vec::with_capacity(n * (n - 1));
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        cross.push(tape.cos_sim_scaled(hhat_b[i], that_f[j], t));
                    }
                }
            }
            let row = tape.concat_cols(&cross);
            let l3_id = tape.log_sum_exp(row);
            let scaled = tape.scale(l3_id, beta);
            total = tape.add(total, scaled);
            l3 = Some(l3_id);
        }
    }

    LossNodes { l1, l2, l3, total }
}
