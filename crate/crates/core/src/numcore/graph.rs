//! Reverse-mode tape over rank-2 tensors.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters enter the
//! graph through [`Graph::param`] (one node per parameter, cached) and their
//! gradients come back from [`Graph::backward`] keyed by [`ParamId`].

use std::collections::HashMap;

use super::tensor::{cst, gelu, gelu_grad, Float, Tensor};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const MASK_FILL: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named parameter tensors in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Float> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.id(name).map(|id| &mut self.tensors[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    RowSoftmax(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Gelu(NodeId),
    Embedding {
        table: NodeId,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
    MaskedFill {
        x: NodeId,
        mask: Vec<bool>,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    SliceRows {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    Sum(NodeId),
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Gradients of a scalar loss with respect to each parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Float> Gradients<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            grads: store.ids().map(|id| Some(Tensor::zeros(store.get(id).shape()))).collect(),
        }
    }

    /// `None` when the parameter did not influence the loss.
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Adds `other` into `self`, parameter by parameter.
    pub fn accumulate(&mut self, other: &Gradients<T>) -> Result<()> {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.add_assign(t)?,
                    None => *mine = Some(t.clone()),
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for t in self.grads.iter_mut().flatten() {
            for x in t.data_mut() {
                *x = *x * s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::all_finite)
    }
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, NodeId>,
    #[cfg(test)]
    pub(crate) corrupt_gelu_backward: bool,
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            #[cfg(test)]
            corrupt_gelu_backward: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, t: Tensor<T>) -> NodeId {
        self.push(Op::Leaf, t, false)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        if let Some(&n) = self.params.get(&id) {
            return n;
        }
        let n = self.push(Op::Param(id), store.get(id).clone(), true);
        self.params.insert(id, n);
        n
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Add(a, b), v, rg))
    }

    /// `x + bias` with `bias` of shape `[1, cols]` broadcast over rows.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(x).dims2()?;
        let b = self.value(bias);
        if b.shape() != [1, c] {
            return Err(Error::Shape {
                op: "add_row",
                left: self.value(x).shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let mut out = self.value(x).data().to_vec();
        for i in 0..r {
            for (o, &bb) in out[i * c..(i + 1) * c].iter_mut().zip(b.data()) {
                *o = *o + bb;
            }
        }
        let v = Tensor::new(vec![r, c], out)?;
        let rg = self.rg(&[x, bias]);
        Ok(self.push(Op::AddRow(x, bias), v, rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::Mul(a, b), v, rg))
    }

    pub fn scale(&mut self, a: NodeId, s: T) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(Op::Scale(a, s), v, rg)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), v, rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose()?;
        let rg = self.rg(&[a]);
        Ok(self.push(Op::Transpose(a), v, rg))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(Op::Reshape(a), v, rg))
    }

    pub fn row_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).row_softmax()?;
        let rg = self.rg(&[a]);
        Ok(self.push(Op::RowSoftmax(a), v, rg))
    }

    /// Per-row normalization with learnable `gain` and `bias` (`[1, cols]`).
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let (r, c) = xv.dims2()?;
        for p in [gain, bias] {
            if self.value(p).shape() != [1, c] {
                return Err(Error::Shape {
                    op: "layer_norm",
                    left: xv.shape().to_vec(),
                    right: self.value(p).shape().to_vec(),
                });
            }
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let n = cst::<T>(c as f64);
        let eps = cst::<T>(LAYER_NORM_EPS);
        let mut xhat = vec![T::zero(); r * c];
        let mut inv_std = vec![T::zero(); r];
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let row = xv.row(i);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std[i] = inv;
            for j in 0..c {
                let h = (row[j] - mean) * inv;
                xhat[i * c + j] = h;
                out[i * c + j] = g[j] * h + b[j];
            }
        }
        let v = Tensor::new(vec![r, c], out)?;
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            v,
            rg,
        ))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(gelu);
        let rg = self.rg(&[a]);
        self.push(Op::Gelu(a), v, rg)
    }

    /// Gathers rows of `table` (`[vocab, dim]`) → `[ids.len(), dim]`.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        let (rows, dim) = t.dims2()?;
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    op: "embedding",
                    index: id,
                    bound: rows,
                });
            }
            out.extend_from_slice(t.row(id));
        }
        let v = Tensor::new(vec![ids.len(), dim], out)?;
        let rg = self.rg(&[table]);
        Ok(self.push(
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            v,
            rg,
        ))
    }

    /// Mean cross-entropy of logit rows against `labels`; a `[1, 1]` node.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let z = self.value(logits);
        let (r, c) = z.dims2()?;
        if labels.len() != r {
            return Err(Error::Shape {
                op: "cross_entropy",
                left: z.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let probs = z.row_softmax()?;
        let mut loss = T::zero();
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::Index {
                    op: "cross_entropy",
                    index: y,
                    bound: c,
                });
            }
            let row = z.row(i);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            loss = loss + lse - row[y];
        }
        let v = Tensor::scalar(loss / cst(r as f64));
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            v,
            rg,
        ))
    }

    /// Replaces entries where `mask` is true with −1e9.
    pub fn masked_fill(&mut self, x: NodeId, mask: &[bool]) -> Result<NodeId> {
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(Error::Shape {
                op: "masked_fill",
                left: xv.shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let fill = cst::<T>(MASK_FILL);
        let data = xv.data().iter().zip(mask).map(|(&v, &m)| if m { fill } else { v }).collect();
        let v = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(
            Op::MaskedFill {
                x,
                mask: mask.to_vec(),
            },
            v,
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, width: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let (r, c) = xv.dims2()?;
        if start + width > c {
            return Err(Error::Shape {
                op: "slice_cols",
                left: vec![r, c],
                right: vec![start, width],
            });
        }
        let mut out = Vec::with_capacity(r * width);
        for i in 0..r {
            out.extend_from_slice(&xv.row(i)[start..start + width]);
        }
        let v = Tensor::new(vec![r, width], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::SliceCols { x, start }, v, rg))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, count: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let (r, c) = xv.dims2()?;
        if start + count > r {
            return Err(Error::Shape {
                op: "slice_rows",
                left: vec![r, c],
                right: vec![start, count],
            });
        }
        let v = Tensor::new(vec![count, c], xv.data()[start * c..(start + count) * c].to_vec())?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::SliceRows { x, start }, v, rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let dims: Vec<(usize, usize)> = parts.iter().map(|&p| self.value(p).dims2()).collect::<Result<_>>()?;
        let r = dims.first().map_or(0, |d| d.0);
        if dims.iter().any(|d| d.0 != r) {
            return Err(Error::Shape {
                op: "concat_cols",
                left: dims.iter().map(|d| d.0).collect(),
                right: vec![r],
            });
        }
        let total: usize = dims.iter().map(|d| d.1).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let v = Tensor::new(vec![r, total], out)?;
        let rg = self.rg(parts);
        Ok(self.push(Op::ConcatCols(parts.to_vec()), v, rg))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.rg(&[x]);
        self.push(Op::Sum(x), Tensor::scalar(s), rg)
    }

    /// `x · w + b` for `x: [n, in]`, `w: [in, out]`, `b: [1, out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// Back-propagates from a scalar node. Nodes are visited in reverse
    /// creation order, so accumulation order is fixed.
    pub fn backward(&self, loss: NodeId, n_params: usize) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), T::one()));
        let mut out = Gradients {
            grads: vec![None; n_params],
        };

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(pid) => {
                    if pid.0 >= out.grads.len() {
                        out.grads.resize(pid.0 + 1, None);
                    }
                    out.grads[pid.0] = Some(g);
                }
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, g.clone())?;
                    self.acc(&mut grads, *b, g)?;
                }
                Op::AddRow(x, b) => {
                    let (r, c) = g.dims2()?;
                    let mut gb = vec![T::zero(); c];
                    for i in 0..r {
                        for (s, &v) in gb.iter_mut().zip(g.row(i)) {
                            *s = *s + v;
                        }
                    }
                    self.acc(&mut grads, *b, Tensor::new(vec![1, c], gb)?)?;
                    self.acc(&mut grads, *x, g)?;
                }
                Op::Mul(a, b) => {
                    let ga = g.mul(self.value(*b))?;
                    let gb = g.mul(self.value(*a))?;
                    self.acc(&mut grads, *a, ga)?;
                    self.acc(&mut grads, *b, gb)?;
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    self.acc(&mut grads, *a, g.map(|v| v * s))?;
                }
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].requires_grad {
                        let ga = g.matmul(&self.value(*b).transpose()?)?;
                        self.acc(&mut grads, *a, ga)?;
                    }
                    if self.nodes[b.0].requires_grad {
                        let gb = self.value(*a).transpose()?.matmul(&g)?;
                        self.acc(&mut grads, *b, gb)?;
                    }
                }
                Op::Transpose(a) => {
                    self.acc(&mut grads, *a, g.transpose()?)?;
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    self.acc(&mut grads, *a, g.reshape(&shape)?)?;
                }
                Op::RowSoftmax(a) => {
                    let y = &node.value;
                    let (r, c) = y.dims2()?;
                    let mut gx = vec![T::zero(); r * c];
                    for i in 0..r {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for j in 0..c {
                            gx[i * c + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    self.acc(&mut grads, *a, Tensor::new(vec![r, c], gx)?)?;
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let (r, c) = g.dims2()?;
                    let gv = self.value(*gain).data();
                    let n = cst::<T>(c as f64);
                    let mut dgain = vec![T::zero(); c];
                    let mut dbias = vec![T::zero(); c];
                    let mut dx = vec![T::zero(); r * c];
                    for i in 0..r {
                        let gr = g.row(i);
                        let hr = &xhat[i * c..(i + 1) * c];
                        let mut sum_d = T::zero();
                        let mut sum_dh = T::zero();
                        for j in 0..c {
                            dgain[j] = dgain[j] + gr[j] * hr[j];
                            dbias[j] = dbias[j] + gr[j];
                            let d = gr[j] * gv[j];
                            sum_d = sum_d + d;
                            sum_dh = sum_dh + d * hr[j];
                        }
                        for j in 0..c {
                            let d = gr[j] * gv[j];
                            dx[i * c + j] = inv_std[i] / n * (n * d - sum_d - hr[j] * sum_dh);
                        }
                    }
                    self.acc(&mut grads, *gain, Tensor::new(vec![1, c], dgain)?)?;
                    self.acc(&mut grads, *bias, Tensor::new(vec![1, c], dbias)?)?;
                    self.acc(&mut grads, *x, Tensor::new(vec![r, c], dx)?)?;
                }
                Op::Gelu(a) => {
                    let derivative: fn(T) -> T = gelu_grad;
                    #[cfg(test)]
                    let derivative: fn(T) -> T = if self.corrupt_gelu_backward {
                        |x| gelu_grad(x) * cst(1.1)
                    } else {
                        derivative
                    };
                    let gx = g.zip_map(self.value(*a), "gelu", |gv, x| gv * derivative(x))?;
                    self.acc(&mut grads, *a, gx)?;
                }
                Op::Embedding { table, ids } => {
                    let shape = self.value(*table).shape().to_vec();
                    let dim = shape[1];
                    let mut gt = Tensor::zeros(&shape);
                    let data = gt.data_mut();
                    for (r, &id) in ids.iter().enumerate() {
                        for (d, &v) in data[id * dim..(id + 1) * dim].iter_mut().zip(g.row(r)) {
                            *d = *d + v;
                        }
                    }
                    self.acc(&mut grads, *table, gt)?;
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let (r, c) = probs.dims2()?;
                    let scale = g.data()[0] / cst(r as f64);
                    let mut gz = probs.data().to_vec();
                    for (i, &y) in labels.iter().enumerate() {
                        gz[i * c + y] = gz[i * c + y] - T::one();
                    }
                    for v in gz.iter_mut() {
                        *v = *v * scale;
                    }
                    self.acc(&mut grads, *logits, Tensor::new(vec![r, c], gz)?)?;
                }
                Op::MaskedFill { x, mask } => {
                    let data = g.data().iter().zip(mask).map(|(&v, &m)| if m { T::zero() } else { v }).collect();
                    self.acc(&mut grads, *x, Tensor::new(g.shape().to_vec(), data)?)?;
                }
                Op::SliceCols { x, start } => {
                    let shape = self.value(*x).shape().to_vec();
                    let (r, c) = (shape[0], shape[1]);
                    let w = g.shape()[1];
                    let mut gx = Tensor::zeros(&shape);
                    let data = gx.data_mut();
                    for i in 0..r {
                        data[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                    }
                    self.acc(&mut grads, *x, gx)?;
                }
                Op::SliceRows { x, start } => {
                    let shape = self.value(*x).shape().to_vec();
                    let c = shape[1];
                    let mut gx = Tensor::zeros(&shape);
                    gx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    self.acc(&mut grads, *x, gx)?;
                }
                Op::ConcatCols(parts) => {
                    let (r, _) = g.dims2()?;
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).shape()[1];
                        let mut gp = Vec::with_capacity(r * w);
                        for i in 0..r {
                            gp.extend_from_slice(&g.row(i)[offset..offset + w]);
                        }
                        offset += w;
                        self.acc(&mut grads, p, Tensor::new(vec![r, w], gp)?)?;
                    }
                }
                Op::Sum(x) => {
                    let s = g.data()[0];
                    let shape = self.value(*x).shape().to_vec();
                    self.acc(&mut grads, *x, Tensor::filled(&shape, s))?;
                }
            }
        }
        Ok(out)
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) -> Result<()> {
        if !self.nodes[id.0].requires_grad {
            return Ok(());
        }
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }
}
