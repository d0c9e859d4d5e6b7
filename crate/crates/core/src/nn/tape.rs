//! Eager reverse-mode autodiff over a flat tape of tensor ops.
//!
//! Values are computed as nodes are added; `backward` walks the tape in
//! reverse and accumulates gradients into `Var` and `Param` leaves. The op
//! set is exactly what the encoders and losses need, nothing speculative.

use std::collections::{BTreeMap, HashMap};

use crate::nn::tensor::{dot, matmul, matmul_nt, matmul_tn, norm, Tensor};

pub type NodeId = usize;

const LN_EPS: f64 = 1e-5;
const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Const,
    Var,
    Param,
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    MatMulTN(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRow(NodeId, NodeId),
    Gelu(NodeId),
    Tanh(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
    GatherRows {
        table: NodeId,
        idx: Vec<usize>,
    },
    AssembleRows {
        sources: Vec<(NodeId, usize)>,
    },
    SliceRow(NodeId, usize),
    SliceCols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    CosSimScaled {
        a: NodeId,
        b: NodeId,
        temp: f64,
    },
    LogSumExp(NodeId),
    SumVars(Vec<NodeId>),
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Tensor>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, NodeId)>,
    param_index: HashMap<String, NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            grad: None,
        });
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Const, t)
    }

    pub fn var(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Var, t)
    }

    /// Registers a named parameter; repeated names return the original node
    /// so every use shares one gradient accumulator.
    pub fn param(&mut self, name: &str, t: Tensor) -> NodeId {
        if let Some(&id) = self.param_index.get(name) {
            debug_assert_eq!(
                (self.nodes[id].value.rows, self.nodes[id].value.cols),
                (t.rows, t.cols),
                "param {name} re-registered with a different shape"
            );
            return id;
        }
        let id = self.push(Op::Param, t);
        self.params.push((name.to_string(), id));
        self.param_index.insert(name.to_string(), id);
        id
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id].grad.as_ref()
    }

    pub fn param_grads(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params
            .iter()
            .filter_map(|(name, id)| self.nodes[*id].grad.as_ref().map(|g| (name.as_str(), g)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul(&self.nodes[a].value, &self.nodes[b].value);
        self.push(Op::MatMul(a, b), v)
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul_nt(&self.nodes[a].value, &self.nodes[b].value);
        self.push(Op::MatMulNT(a, b), v)
    }

    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = matmul_tn(&self.nodes[a].value, &self.nodes[b].value);
        self.push(Op::MatMulTN(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!((x.rows, x.cols), (y.rows, y.cols), "add shape mismatch");
        let v = Tensor::from_vec(
            x.rows,
            x.cols,
            x.data.iter().zip(&y.data).map(|(p, q)| p + q).collect(),
        );
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!((x.rows, x.cols), (y.rows, y.cols), "sub shape mismatch");
        let v = Tensor::from_vec(
            x.rows,
            x.cols,
            x.data.iter().zip(&y.data).map(|(p, q)| p - q).collect(),
        );
        self.push(Op::Sub(a, b), v)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!((x.rows, x.cols), (y.rows, y.cols), "hadamard shape mismatch");
        let v = Tensor::from_vec(
            x.rows,
            x.cols,
            x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect(),
        );
        self.push(Op::Hadamard(a, b), v)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let x = &self.nodes[a].value;
        let v = Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|p| p * s).collect());
        self.push(Op::Scale(a, s), v)
    }

    /// Adds a [1,n] row vector to every row of a [m,n] matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (x, r) = (&self.nodes[a].value, &self.nodes[row].value);
        assert_eq!(r.rows, 1, "add_row needs a single-row bias");
        assert_eq!(x.cols, r.cols, "add_row width mismatch");
        let mut v = x.clone();
        for i in 0..v.rows {
            for (p, q) in v.row_mut(i).iter_mut().zip(&r.data) {
                *p += q;
            }
        }
        self.push(Op::AddRow(a, row), v)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        let v = Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|&p| gelu(p)).collect());
        self.push(Op::Gelu(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        let v = Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|p| p.tanh()).collect());
        self.push(Op::Tanh(a), v)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        let mut v = x.clone();
        for i in 0..v.rows {
            softmax_inplace(v.row_mut(i));
        }
        self.push(Op::SoftmaxRows(a), v)
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let (xs, g, b) = (
            &self.nodes[x].value,
            &self.nodes[gain].value,
            &self.nodes[bias].value,
        );
        assert_eq!(g.rows, 1);
        assert_eq!(b.rows, 1);
        assert_eq!(g.cols, xs.cols);
        assert_eq!(b.cols, xs.cols);
        let mut v = Tensor::zeros(xs.rows, xs.cols);
        for i in 0..xs.rows {
            let row = xs.row(i);
            let (mean, inv_std) = row_stats(row);
            for j in 0..xs.cols {
                v.set(i, j, g.data[j] * (row[j] - mean) * inv_std + b.data[j]);
            }
        }
        self.push(Op::LayerNorm { x, gain, bias }, v)
    }

    pub fn gather_rows(&mut self, table: NodeId, idx: &[usize]) -> NodeId {
        let t = &self.nodes[table].value;
        let mut v = Tensor::zeros(idx.len(), t.cols);
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).copy_from_slice(t.row(i));
        }
        self.push(
            Op::GatherRows {
                table,
                idx: idx.to_vec(),
            },
            v,
        )
    }

    /// Builds a matrix whose row r is row `sources[r].1` of node
    /// `sources[r].0`; sources may mix different tables.
    pub fn assemble_rows(&mut self, sources: &[(NodeId, usize)]) -> NodeId {
        assert!(!sources.is_empty());
        let cols = self.nodes[sources[0].0].value.cols;
        let mut v = Tensor::zeros(sources.len(), cols);
        for (r, &(node, row)) in sources.iter().enumerate() {
            let src = &self.nodes[node].value;
            assert_eq!(src.cols, cols, "assemble_rows width mismatch");
            v.row_mut(r).copy_from_slice(src.row(row));
        }
        self.push(
            Op::AssembleRows {
                sources: sources.to_vec(),
            },
            v,
        )
    }

    pub fn slice_row(&mut self, a: NodeId, row: usize) -> NodeId {
        let x = &self.nodes[a].value;
        let v = Tensor::from_vec(1, x.cols, x.row(row).to_vec());
        self.push(Op::SliceRow(a, row), v)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let x = &self.nodes[a].value;
        assert!(start < end && end <= x.cols, "slice_cols out of range");
        let mut v = Tensor::zeros(x.rows, end - start);
        for i in 0..x.rows {
            v.row_mut(i).copy_from_slice(&x.row(i)[start..end]);
        }
        self.push(Op::SliceCols(a, start, end), v)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.nodes[parts[0]].value.rows;
        let cols: usize = parts.iter().map(|&p| self.nodes[p].value.cols).sum();
        let mut v = Tensor::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = &self.nodes[p].value;
                assert_eq!(src.rows, rows, "concat_cols height mismatch");
                v.row_mut(i)[off..off + src.cols].copy_from_slice(src.row(i));
                off += src.cols;
            }
        }
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    /// Temperature-scaled cosine similarity of two [1,d] vectors, a [1,1]
    /// scalar node.
    pub fn cos_sim_scaled(&mut self, a: NodeId, b: NodeId, temp: f64) -> NodeId {
        let (x, y) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(x.rows, 1);
        assert_eq!(y.rows, 1);
        assert_eq!(x.cols, y.cols);
        let na = norm(&x.data).max(NORM_FLOOR);
        let nb = norm(&y.data).max(NORM_FLOOR);
        let c = dot(&x.data, &y.data) / (na * nb);
        let v = Tensor::from_vec(1, 1, vec![c / temp]);
        self.push(Op::CosSimScaled { a, b, temp }, v)
    }

    /// log(sum(exp(x))) over a [1,n] row, computed stably.
    pub fn log_sum_exp(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        assert_eq!(x.rows, 1, "log_sum_exp expects a row");
        let m = x.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = x.data.iter().map(|v| (v - m).exp()).sum();
        let v = Tensor::from_vec(1, 1, vec![m + s.ln()]);
        self.push(Op::LogSumExp(a), v)
    }

    pub fn sum_vars(&mut self, ids: &[NodeId]) -> NodeId {
        assert!(!ids.is_empty());
        let s: f64 = ids.iter().map(|&i| self.nodes[i].value.scalar()).sum();
        self.push(Op::SumVars(ids.to_vec()), Tensor::from_vec(1, 1, vec![s]))
    }

    pub fn mean_vars(&mut self, ids: &[NodeId]) -> NodeId {
        let s = self.sum_vars(ids);
        self.scale(s, 1.0 / ids.len() as f64)
    }

    pub fn backward(&mut self, root: NodeId) {
        assert_eq!(self.nodes[root].value.numel(), 1, "backward root must be scalar");
        self.backward_seeded(root, Tensor::from_vec(1, 1, vec![1.0]));
    }

    pub fn backward_seeded(&mut self, root: NodeId, seed: Tensor) {
        let rv = &self.nodes[root].value;
        assert_eq!((seed.rows, seed.cols), (rv.rows, rv.cols), "seed shape mismatch");
        self.accum(root, seed);
        for i in (0..self.nodes.len()).rev() {
            if matches!(self.nodes[i].op, Op::Const | Op::Var | Op::Param) {
                continue;
            }
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            match op {
                Op::Const | Op::Var | Op::Param => unreachable!(),
                Op::MatMul(a, b) => {
                    let da = matmul_nt(&grad, &self.nodes[b].value);
                    let db = matmul_tn(&self.nodes[a].value, &grad);
                    self.accum(a, da);
                    self.accum(b, db);
                }
                Op::MatMulNT(a, b) => {
                    let da = matmul(&grad, &self.nodes[b].value);
                    let db = matmul_tn(&grad, &self.nodes[a].value);
                    self.accum(a, da);
                    self.accum(b, db);
                }
                Op::MatMulTN(a, b) => {
                    let da = matmul_nt(&self.nodes[b].value, &grad);
                    let db = matmul(&self.nodes[a].value, &grad);
                    self.accum(a, da);
                    self.accum(b, db);
                }
                Op::Add(a, b) => {
                    self.accum(a, grad.clone());
                    self.accum(b, grad);
                }
                Op::Sub(a, b) => {
                    let mut neg = grad.clone();
                    neg.scale_inplace(-1.0);
                    self.accum(a, grad);
                    self.accum(b, neg);
                }
                Op::Hadamard(a, b) => {
                    let da = {
                        let y = &self.nodes[b].value;
                        Tensor::from_vec(
                            grad.rows,
                            grad.cols,
                            grad.data.iter().zip(&y.data).map(|(g, v)| g * v).collect(),
                        )
                    };
                    let db = {
                        let x = &self.nodes[a].value;
                        Tensor::from_vec(
                            grad.rows,
                            grad.cols,
                            grad.data.iter().zip(&x.data).map(|(g, v)| g * v).collect(),
                        )
                    };
                    self.accum(a, da);
                    self.accum(b, db);
                }
                Op::Scale(a, s) => {
                    let mut da = grad;
                    da.scale_inplace(s);
                    self.accum(a, da);
                }
                Op::AddRow(a, row) => {
                    let mut drow = Tensor::zeros(1, grad.cols);
                    for i in 0..grad.rows {
                        for (d, g) in drow.data.iter_mut().zip(grad.row(i)) {
                            *d += g;
                        }
                    }
                    self.accum(a, grad);
                    self.accum(row, drow);
                }
                Op::Gelu(a) => {
                    let da = {
                        let x = &self.nodes[a].value;
                        Tensor::from_vec(
                            grad.rows,
                            grad.cols,
                            grad.data
                                .iter()
                                .zip(&x.data)
                                .map(|(g, &v)| g * gelu_grad(v))
                                .collect(),
                        )
                    };
                    self.accum(a, da);
                }
                Op::Tanh(a) => {
                    let da = {
                        let y = &self.nodes[i].value;
                        Tensor::from_vec(
                            grad.rows,
                            grad.cols,
                            grad.data
                                .iter()
                                .zip(&y.data)
                                .map(|(g, v)| g * (1.0 - v * v))
                                .collect(),
                        )
                    };
                    self.accum(a, da);
                }
                Op::SoftmaxRows(a) => {
                    let da = {
                        let p = &self.nodes[i].value;
                        let mut da = Tensor::zeros(grad.rows, grad.cols);
                        for r in 0..grad.rows {
                            let pr = p.row(r);
                            let gr = grad.row(r);
                            let inner = dot(pr, gr);
                            for j in 0..grad.cols {
                                da.set(r, j, pr[j] * (gr[j] - inner));
                            }
                        }
                        da
                    };
                    self.accum(a, da);
                }
                Op::LayerNorm { x, gain, bias } => {
                    let (dx, dgain, dbias) = {
                        let xs = &self.nodes[x].value;
                        let g = &self.nodes[gain].value;
                        let n = xs.cols as f64;
                        let mut dx = Tensor::zeros(xs.rows, xs.cols);
                        let mut dgain = Tensor::zeros(1, xs.cols);
                        let mut dbias = Tensor::zeros(1, xs.cols);
                        for r in 0..xs.rows {
                            let row = xs.row(r);
                            let (mean, inv_std) = row_stats(row);
                            let gr = grad.row(r);
                            let mut sum_dxhat = 0.0;
                            let mut sum_dxhat_xhat = 0.0;
                            for j in 0..xs.cols {
                                let xhat = (row[j] - mean) * inv_std;
                                let dxhat = gr[j] * g.data[j];
                                dgain.data[j] += gr[j] * xhat;
                                dbias.data[j] += gr[j];
                                sum_dxhat += dxhat;
                                sum_dxhat_xhat += dxhat * xhat;
                            }
                            for j in 0..xs.cols {
                                let xhat = (row[j] - mean) * inv_std;
                                let dxhat = gr[j] * g.data[j];
                                dx.set(
                                    r,
                                    j,
                                    inv_std * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n),
                                );
                            }
                        }
                        (dx, dgain, dbias)
                    };
                    self.accum(x, dx);
                    self.accum(gain, dgain);
                    self.accum(bias, dbias);
                }
                Op::GatherRows { table, idx } => {
                    let t = &self.nodes[table].value;
                    let mut dt = Tensor::zeros(t.rows, t.cols);
                    for (r, &srow) in idx.iter().enumerate() {
                        for (d, g) in dt.row_mut(srow).iter_mut().zip(grad.row(r)) {
                            *d += g;
                        }
                    }
                    self.accum(table, dt);
                }
                Op::AssembleRows { sources } => {
                    let mut per_node: BTreeMap<NodeId, Tensor> = BTreeMap::new();
                    for (r, &(node, srow)) in sources.iter().enumerate() {
                        let src = &self.nodes[node].value;
                        let buf = per_node
                            .entry(node)
                            .or_insert_with(|| Tensor::zeros(src.rows, src.cols));
                        for (d, g) in buf.row_mut(srow).iter_mut().zip(grad.row(r)) {
                            *d += g;
                        }
                    }
                    for (node, buf) in per_node {
                        self.accum(node, buf);
                    }
                }
                Op::SliceRow(a, row) => {
                    let x = &self.nodes[a].value;
                    let mut da = Tensor::zeros(x.rows, x.cols);
                    da.row_mut(row).copy_from_slice(&grad.data);
                    self.accum(a, da);
                }
                Op::SliceCols(a, start, _end) => {
                    let x = &self.nodes[a].value;
                    let mut da = Tensor::zeros(x.rows, x.cols);
                    for r in 0..grad.rows {
                        da.row_mut(r)[start..start + grad.cols].copy_from_slice(grad.row(r));
                    }
                    self.accum(a, da);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in &parts {
                        let w = self.nodes[p].value.cols;
                        let mut dp = Tensor::zeros(grad.rows, w);
                        for r in 0..grad.rows {
                            dp.row_mut(r).copy_from_slice(&grad.row(r)[off..off + w]);
                        }
                        off += w;
                        self.accum(p, dp);
                    }
                }
                Op::CosSimScaled { a, b, temp } => {
                    let (da, db) = {
                        let x = &self.nodes[a].value;
                        let y = &self.nodes[b].value;
                        let na = norm(&x.data).max(NORM_FLOOR);
                        let nb = norm(&y.data).max(NORM_FLOOR);
                        let c = dot(&x.data, &y.data) / (na * nb);
                        let g = grad.scalar() / temp;
                        let da = Tensor::from_vec(
                            1,
                            x.cols,
                            (0..x.cols)
                                .map(|j| g * (y.data[j] / (na * nb) - c * x.data[j] / (na * na)))
                                .collect(),
                        );
                        let db = Tensor::from_vec(
                            1,
                            y.cols,
                            (0..y.cols)
                                .map(|j| g * (x.data[j] / (na * nb) - c * y.data[j] / (nb * nb)))
                                .collect(),
                        );
                        (da, db)
                    };
                    self.accum(a, da);
                    self.accum(b, db);
                }
                Op::LogSumExp(a) => {
                    let da = {
                        let x = &self.nodes[a].value;
                        let out = self.nodes[i].value.scalar();
                        let g = grad.scalar();
                        Tensor::from_vec(
                            1,
                            x.cols,
                            x.data.iter().map(|v| g * (v - out).exp()).collect(),
                        )
                    };
                    self.accum(a, da);
                }
                Op::SumVars(ids) => {
                    for id in ids {
                        self.accum(id, grad.clone());
                    }
                }
            }
        }
    }

    fn accum(&mut self, id: NodeId, g: Tensor) {
        match &mut self.nodes[id].grad {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }
}

fn row_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LN_EPS).sqrt())
}

fn softmax_inplace(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

const GELU_C: f64 = 0.7978845608028654;
const GELU_A: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}
