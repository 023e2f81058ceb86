//! Computation record and reverse-mode differentiation.
//!
//! Every forward op appends a node; nodes only reference earlier nodes, so
//! the record is topologically ordered by construction and `backward` is
//! a single reverse sweep. A tape is meant to live for one optimization step.

use std::collections::HashMap;

use crate::error::{NumericsError, Result};
use crate::params::{ParamId, ParamStore};
use crate::real::{gemm, Layout, Real};
use crate::tensor::Tensor;

/// Handle to a node of a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn node_id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        shared_rhs: bool,
    },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, s: T },
    LeakyRelu { a: usize, slope: T },
    Tanh { a: usize },
    Softmax { a: usize, axis: usize },
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Mse { a: usize, b: usize },
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { a: usize, axis: usize, start: usize },
    Embedding { table: usize, indices: Vec<usize> },
    Mean { a: usize },
    Sum { a: usize },
    Permute { a: usize, perm: Vec<usize> },
    Reshape { a: usize },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Ordered record of forward operations.
#[derive(Debug)]
pub struct Tape<T = f32> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, usize>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Outer/axis/inner extents of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn is_suffix(full: &[usize], suffix: &[usize]) -> bool {
    suffix.len() <= full.len() && full[full.len() - suffix.len()..] == *suffix
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

/// For each flat output index of the permuted tensor, the flat input index.
fn permute_map(in_shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let numel: usize = in_shape.iter().product();
    let mut map = Vec::with_capacity(numel);
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..numel {
        let src: usize = idx
            .iter()
            .zip(perm)
            .map(|(&i, &p)| i * in_strides[p])
            .sum();
        map.push(src);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    map
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.params.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// Differentiable leaf (gradients are reported for it).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf bound to a store parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&node) = self.params.get(&id) {
            return Var(node);
        }
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.params.insert(id, v.0);
        v
    }

    /// Makes later `param(store, id)` calls resolve to an existing node.
    pub fn bind_param(&mut self, id: ParamId, v: Var) {
        self.params.insert(id, v.0);
    }

    /// Copy of `a` that blocks gradient flow.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(NumericsError::shape("matmul", &sa, &sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let lead_a = &sa[..sa.len() - 2];
        let lead_b = &sb[..sb.len() - 2];
        let shared_rhs = lead_b.is_empty();
        if k != kb || (!shared_rhs && lead_a != lead_b) {
            return Err(NumericsError::shape("matmul", &sa, &sb));
        }
        let batch: usize = lead_a.iter().product();
        let mut out = vec![T::zero(); batch * m * n];
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        if shared_rhs {
            gemm(batch * m, k, n, av, Layout::Normal, bv, Layout::Normal, &mut out, false);
        } else {
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &av[i * m * k..(i + 1) * m * k],
                    Layout::Normal,
                    &bv[i * k * n..(i + 1) * k * n],
                    Layout::Normal,
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
        }
        let mut shape = lead_a.to_vec();
        shape.extend([m, n]);
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::MatMul {
                a: a.0,
                b: b.0,
                batch,
                m,
                k,
                n,
                shared_rhs,
            },
            rg,
        ))
    }

    fn broadcast_binary(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if !is_suffix(sa, sb) {
            return Err(NumericsError::shape(op, sa, sb));
        }
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let nb = bv.len();
        let data = av
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv[i % nb]))
            .collect();
        Tensor::new(sa.to_vec(), data)
    }

    /// Elementwise `a + b`; `b` may match a trailing suffix of `a`'s shape.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.broadcast_binary("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::Add { a: a.0, b: b.0 }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.broadcast_binary("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::Sub { a: a.0, b: b.0 }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.broadcast_binary("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::Mul { a: a.0, b: b.0 }, rg))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.nodes[a.0].value.map(|x| x * s);
        let rg = self.rg(a.0);
        self.push(out, Op::Scale { a: a.0, s }, rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let out = self.nodes[a.0]
            .value
            .map(|x| if x > T::zero() { x } else { x * slope });
        let rg = self.rg(a.0);
        self.push(out, Op::LeakyRelu { a: a.0, slope }, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(|x| x.tanh());
        let rg = self.rg(a.0);
        self.push(out, Op::Tanh { a: a.0 }, rg)
    }

    /// Numerically stable softmax along `axis`. `-inf` entries get weight 0.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(NumericsError::invalid(
                "softmax",
                format!("axis {axis} out of range for {shape:?}"),
            ));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let x = self.nodes[a.0].value.data();
        let mut y = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let max = (0..n).map(|j| x[at(j)]).fold(T::neg_infinity(), T::max);
                if max == T::neg_infinity() {
                    return Err(NumericsError::invalid("softmax", "row fully masked"));
                }
                let mut sum = T::zero();
                for j in 0..n {
                    let e = (x[at(j)] - max).exp();
                    y[at(j)] = e;
                    sum += e;
                }
                for j in 0..n {
                    y[at(j)] = y[at(j)] / sum;
                }
            }
        }
        let rg = self.rg(a.0);
        Ok(self.push(Tensor::new(shape, y)?, Op::Softmax { a: a.0, axis }, rg))
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    ///
    /// A zero-variance row normalizes to zero, so its output is `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape
            .last()
            .ok_or_else(|| NumericsError::invalid("layer_norm", "scalar input"))?;
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(NumericsError::shape("layer_norm", &shape, self.shape(gamma)));
        }
        let xv = self.nodes[x.0].value.data();
        let g = self.nodes[gamma.0].value.data();
        let bt = self.nodes[beta.0].value.data();
        let rows = xv.len() / d;
        let dn = T::from_usize(d).unwrap();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut y = vec![T::zero(); xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = if var == T::zero() {
                    T::zero()
                } else {
                    (row[j] - mean) * rs
                };
                xhat[r * d + j] = h;
                y[r * d + j] = g[j] * h + bt[j];
            }
        }
        let rg = self.rg(x.0) || self.rg(gamma.0) || self.rg(beta.0);
        Ok(self.push(
            Tensor::new(shape, y)?,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let sp = self.shape(pred);
        let st = self.shape(target);
        if sp != st {
            return Err(NumericsError::shape("mse", sp, st));
        }
        let p = self.nodes[pred.0].value.data();
        let t = self.nodes[target.0].value.data();
        let n = T::from_usize(p.len()).unwrap();
        let loss = p
            .iter()
            .zip(t)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            / n;
        let rg = self.rg(pred.0) || self.rg(target.0);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                a: pred.0,
                b: target.0,
            },
            rg,
        ))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| NumericsError::invalid("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(NumericsError::invalid(
                "concat",
                format!("axis {axis} out of range for {base:?}"),
            ));
        }
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(NumericsError::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let n = self.shape(x)[axis];
                let v = self.nodes[x.0].value.data();
                out.extend_from_slice(&v[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let rg = xs.iter().any(|x| self.rg(x.0));
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                inputs: xs.iter().map(|x| x.0).collect(),
                axis,
            },
            rg,
        ))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(NumericsError::invalid(
                "slice",
                format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let v = self.nodes[a.0].value.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            out.extend_from_slice(&v[base..base + len * inner]);
        }
        let mut oshape = shape;
        oshape[axis] = len;
        let rg = self.rg(a.0);
        Ok(self.push(
            Tensor::new(oshape, out)?,
            Op::Slice {
                a: a.0,
                axis,
                start,
            },
            rg,
        ))
    }

    /// Rows of a `V×d` table selected by `indices`, shaped `len×d`.
    pub fn embedding_lookup(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 {
            return Err(NumericsError::invalid(
                "embedding_lookup",
                format!("table must be 2-d, got {shape:?}"),
            ));
        }
        if indices.is_empty() {
            return Err(NumericsError::invalid("embedding_lookup", "no indices"));
        }
        let (rows, d) = (shape[0], shape[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(NumericsError::invalid(
                "embedding_lookup",
                format!("index {bad} out of range for {rows} rows"),
            ));
        }
        let t = self.nodes[table.0].value.data();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(&t[i * d..(i + 1) * d]);
        }
        let rg = self.rg(table.0);
        Ok(self.push(
            Tensor::new([indices.len(), d], out)?,
            Op::Embedding {
                table: table.0,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.data();
        let m = v.iter().copied().sum::<T>() / T::from_usize(v.len()).unwrap();
        let rg = self.rg(a.0);
        self.push(Tensor::scalar(m), Op::Mean { a: a.0 }, rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data().iter().copied().sum::<T>();
        let rg = self.rg(a.0);
        self.push(Tensor::scalar(s), Op::Sum { a: a.0 }, rg)
    }

    /// Reorders axes: output axis `d` is input axis `perm[d]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        let valid = perm.len() == shape.len()
            && perm.iter().all(|&p| p < shape.len() && !std::mem::replace(&mut seen[p], true));
        if !valid {
            return Err(NumericsError::invalid(
                "permute",
                format!("bad permutation {perm:?} for {shape:?}"),
            ));
        }
        let map = permute_map(&shape, perm);
        let v = self.nodes[a.0].value.data();
        let out = map.iter().map(|&i| v[i]).collect();
        let oshape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let rg = self.rg(a.0);
        Ok(self.push(
            Tensor::new(oshape, out)?,
            Op::Permute {
                a: a.0,
                perm: perm.to_vec(),
            },
            rg,
        ))
    }

    /// Swaps two axes.
    pub fn transpose(&mut self, a: Var, axis1: usize, axis2: usize) -> Result<Var> {
        let rank = self.shape(a).len();
        if axis1 >= rank || axis2 >= rank {
            return Err(NumericsError::invalid(
                "transpose",
                format!("axes ({axis1}, {axis2}) out of range for rank {rank}"),
            ));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(axis1, axis2);
        self.permute(a, &perm)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.nodes[a.0].value.clone().reshape(shape.to_vec())?;
        let rg = self.rg(a.0);
        Ok(self.push(value, Op::Reshape { a: a.0 }, rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(NumericsError::EmptyRecord);
        }
        let root = &self.nodes[loss.0].value;
        if !root.is_scalar() {
            return Err(NumericsError::NonScalarLoss(root.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            params: self.params.iter().map(|(&p, &n)| (p, n)).collect(),
        })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<T>>], idx: usize) -> Option<&'a mut Vec<T>> {
        if !self.nodes[idx].requires_grad {
            return None;
        }
        let n = self.nodes[idx].value.numel();
        Some(grads[idx].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn reduce_broadcast(&self, g: &[T], b: usize) -> Vec<T> {
        let nb = self.nodes[b].value.numel();
        let mut out = vec![T::zero(); nb];
        for (i, &x) in g.iter().enumerate() {
            out[i % nb] += x;
        }
        out
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                shared_rhs,
            } => {
                let av = self.nodes[a].value.data();
                let bv = self.nodes[b].value.data();
                if let Some(ga) = self.acc(grads, a) {
                    if shared_rhs {
                        gemm(batch * m, n, k, g, Layout::Normal, bv, Layout::Transposed, ga, true);
                    } else {
                        for s in 0..batch {
                            gemm(
                                m,
                                n,
                                k,
                                &g[s * m * n..(s + 1) * m * n],
                                Layout::Normal,
                                &bv[s * k * n..(s + 1) * k * n],
                                Layout::Transposed,
                                &mut ga[s * m * k..(s + 1) * m * k],
                                true,
                            );
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, b) {
                    if shared_rhs {
                        gemm(k, batch * m, n, av, Layout::Transposed, g, Layout::Normal, gb, true);
                    } else {
                        for s in 0..batch {
                            gemm(
                                k,
                                m,
                                n,
                                &av[s * m * k..(s + 1) * m * k],
                                Layout::Transposed,
                                &g[s * m * n..(s + 1) * m * n],
                                Layout::Normal,
                                &mut gb[s * k * n..(s + 1) * k * n],
                                true,
                            );
                        }
                    }
                }
            }
            &Op::Add { a, b } => {
                if let Some(ga) = self.acc(grads, a) {
                    add_into(ga, g);
                }
                if self.nodes[b].requires_grad {
                    let rb = self.reduce_broadcast(g, b);
                    add_into(self.acc(grads, b).unwrap(), &rb);
                }
            }
            &Op::Sub { a, b } => {
                if let Some(ga) = self.acc(grads, a) {
                    add_into(ga, g);
                }
                if self.nodes[b].requires_grad {
                    let rb = self.reduce_broadcast(g, b);
                    let gb = self.acc(grads, b).unwrap();
                    for (d, s) in gb.iter_mut().zip(rb) {
                        *d -= s;
                    }
                }
            }
            &Op::Mul { a, b } => {
                let av = self.nodes[a].value.data();
                let bv = self.nodes[b].value.data();
                let nb = bv.len();
                if let Some(ga) = self.acc(grads, a) {
                    for (j, d) in ga.iter_mut().enumerate() {
                        *d += g[j] * bv[j % nb];
                    }
                }
                if self.nodes[b].requires_grad {
                    let prod: Vec<T> = g.iter().zip(av).map(|(&x, &y)| x * y).collect();
                    let rb = self.reduce_broadcast(&prod, b);
                    add_into(self.acc(grads, b).unwrap(), &rb);
                }
            }
            &Op::Scale { a, s } => {
                if let Some(ga) = self.acc(grads, a) {
                    for (d, &x) in ga.iter_mut().zip(g) {
                        *d += x * s;
                    }
                }
            }
            &Op::LeakyRelu { a, slope } => {
                let x = self.nodes[a].value.data();
                if let Some(ga) = self.acc(grads, a) {
                    for j in 0..ga.len() {
                        let d = if x[j] > T::zero() { T::one() } else { slope };
                        ga[j] += g[j] * d;
                    }
                }
            }
            &Op::Tanh { a } => {
                let y = node.value.data();
                if let Some(ga) = self.acc(grads, a) {
                    for j in 0..ga.len() {
                        ga[j] += g[j] * (T::one() - y[j] * y[j]);
                    }
                }
            }
            &Op::Softmax { a, axis } => {
                let y = node.value.data();
                let (outer, n, inner) = split_axis(node.value.shape(), axis);
                if let Some(ga) = self.acc(grads, a) {
                    for o in 0..outer {
                        for ii in 0..inner {
                            let at = |j: usize| o * n * inner + j * inner + ii;
                            let dot = (0..n).map(|j| g[at(j)] * y[at(j)]).sum::<T>();
                            for j in 0..n {
                                ga[at(j)] += y[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let d = self.nodes[gamma].value.numel();
                let rows = xhat.len() / d;
                let gv = self.nodes[gamma].value.data();
                if self.nodes[gamma].requires_grad {
                    let mut gg = vec![T::zero(); d];
                    for r in 0..rows {
                        for j in 0..d {
                            gg[j] += g[r * d + j] * xhat[r * d + j];
                        }
                    }
                    add_into(self.acc(grads, gamma).unwrap(), &gg);
                }
                if self.nodes[beta].requires_grad {
                    let gb = self.reduce_broadcast(g, beta);
                    add_into(self.acc(grads, beta).unwrap(), &gb);
                }
                if let Some(gx) = self.acc(grads, x) {
                    let dn = T::from_usize(d).unwrap();
                    for r in 0..rows {
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..d {
                            let dh = g[r * d + j] * gv[j];
                            mean_dh += dh;
                            mean_dh_h += dh * xhat[r * d + j];
                        }
                        mean_dh = mean_dh / dn;
                        mean_dh_h = mean_dh_h / dn;
                        for j in 0..d {
                            let dh = g[r * d + j] * gv[j];
                            gx[r * d + j] +=
                                rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
                        }
                    }
                }
            }
            &Op::Mse { a, b } => {
                let av = self.nodes[a].value.data();
                let bv = self.nodes[b].value.data();
                let c = g[0] * T::lit(2.0) / T::from_usize(av.len()).unwrap();
                if let Some(ga) = self.acc(grads, a) {
                    for j in 0..ga.len() {
                        ga[j] += c * (av[j] - bv[j]);
                    }
                }
                if let Some(gb) = self.acc(grads, b) {
                    for j in 0..gb.len() {
                        gb[j] -= c * (av[j] - bv[j]);
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &x in inputs {
                    let n = self.nodes[x].value.shape()[*axis];
                    if let Some(gx) = self.acc(grads, x) {
                        for o in 0..outer {
                            let src = o * total * inner + offset * inner;
                            add_into(
                                &mut gx[o * n * inner..(o + 1) * n * inner],
                                &g[src..src + n * inner],
                            );
                        }
                    }
                    offset += n;
                }
            }
            &Op::Slice { a, axis, start } => {
                let len = node.value.shape()[axis];
                let (outer, n, inner) = split_axis(self.nodes[a].value.shape(), axis);
                if let Some(ga) = self.acc(grads, a) {
                    for o in 0..outer {
                        let dst = o * n * inner + start * inner;
                        add_into(
                            &mut ga[dst..dst + len * inner],
                            &g[o * len * inner..(o + 1) * len * inner],
                        );
                    }
                }
            }
            Op::Embedding { table, indices } => {
                let d = self.nodes[*table].value.shape()[1];
                if let Some(gt) = self.acc(grads, *table) {
                    for (r, &ix) in indices.iter().enumerate() {
                        add_into(&mut gt[ix * d..(ix + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                }
            }
            &Op::Mean { a } => {
                let n = T::from_usize(self.nodes[a].value.numel()).unwrap();
                if let Some(ga) = self.acc(grads, a) {
                    let c = g[0] / n;
                    ga.iter_mut().for_each(|d| *d += c);
                }
            }
            &Op::Sum { a } => {
                if let Some(ga) = self.acc(grads, a) {
                    ga.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Permute { a, perm } => {
                let map = permute_map(self.nodes[*a].value.shape(), perm);
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, &src) in map.iter().enumerate() {
                        ga[src] += g[o];
                    }
                }
            }
            &Op::Reshape { a } => {
                if let Some(ga) = self.acc(grads, a) {
                    add_into(ga, g);
                }
            }
        }
    }
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients<T = f32> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(ParamId, usize)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient with respect to `v`; zeros when `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Gradient for a store parameter that was bound on the tape.
    pub fn param(&self, id: ParamId) -> Option<&[T]> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|&(_, node)| self.grads[node].as_deref())
    }

    /// Adds every bound parameter's gradient into the store's buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) {
        for &(id, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                add_into(store.grad_mut(id), g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f32]) -> Tensor<f32> {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::scalar(3.0f32));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 6.0);
    }

    #[test]
    fn unreachable_gradient_is_zero() {
        let mut tape = Tape::new();
        let x = tape.input(t(&[2], &[1.0, 2.0]));
        let unused = tape.input(t(&[3], &[1.0, 2.0, 3.0]));
        let _also_unused = tape.tanh(unused);
        let loss = tape.mean(x);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(unused).data(), &[0.0; 3]);
        assert_eq!(g.wrt(x).data(), &[0.5, 0.5]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.input(t(&[2], &[1.0, 2.0]));
        assert_eq!(
            tape.backward(x).unwrap_err(),
            NumericsError::NonScalarLoss(vec![2])
        );
        let empty = Tape::<f32>::new();
        assert!(matches!(
            empty.backward(Var(0)),
            Err(NumericsError::EmptyRecord)
        ));
    }

    #[test]
    fn forward_values() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1.0, 1.0]));
        let b = tape.constant(t(&[2], &[0.0, 0.0]));
        let l = tape.mse(a, b).unwrap();
        assert_eq!(tape.value(l).item(), 1.0);

        let c = tape.constant(t(&[3], &[0.7, 0.7, 0.7]));
        let s = tape.softmax(c, 0).unwrap();
        for &p in tape.value(s).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-7);
        }

        let x = tape.constant(t(&[1, 4], &[2.0; 4]));
        let gamma = tape.constant(t(&[4], &[1.0; 4]));
        let beta = tape.constant(t(&[4], &[0.0, 0.5, -1.0, 2.0]));
        let y = tape.layer_norm(x, gamma, beta, 1e-5).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 3], &[0.0; 6]));
        let b = tape.constant(t(&[2, 3], &[0.0; 6]));
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
        assert!(err.to_string().contains("matmul"));
        let c = tape.constant(t(&[3], &[0.0; 3]));
        assert!(tape.mse(a, c).is_err());
        let d = tape.constant(t(&[2], &[0.0; 2]));
        assert!(tape.add(a, d).is_err());
    }

    #[test]
    fn fan_out_accumulates() {
        let mut tape = Tape::new();
        let x = tape.input(t(&[2], &[1.0, -2.0]));
        let y = tape.add(x, x).unwrap();
        let z = tape.mul(y, x).unwrap();
        let l = tape.sum(z);
        let g = tape.backward(l).unwrap();
        // l = 2 * sum(x^2), dl/dx = 4x
        assert_eq!(g.wrt(x).data(), &[4.0, -8.0]);
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let mut tape = Tape::new();
        let x = tape.input(t(&[2, 2], &[0.3, 0.9, -0.1, 0.2]));
        let mask = tape.constant(t(&[2, 2], &[0.0, f32::NEG_INFINITY, 0.0, 0.0]));
        let m = tape.add(x, mask).unwrap();
        let s = tape.softmax(m, 1).unwrap();
        assert_eq!(tape.value(s).data()[0], 1.0);
        assert_eq!(tape.value(s).data()[1], 0.0);
    }

    #[test]
    fn param_binding_is_memoized() {
        let mut store = ParamStore::<f32>::new();
        let id = store.insert("w", t(&[2], &[1.0, 2.0])).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, id);
        let b = tape.param(&store, id);
        assert_eq!(a, b);
        let p = tape.mul(a, b).unwrap();
        let l = tape.sum(p);
        let g = tape.backward(l).unwrap();
        g.accumulate_into(&mut store);
        assert_eq!(store.grad(id), &[2.0, 4.0]);
    }

    #[test]
    fn permute_round_trip() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_fn([2, 3, 4], |i| i as f32));
        let y = tape.permute(x, &[2, 0, 1]).unwrap();
        assert_eq!(tape.shape(y), &[4, 2, 3]);
        // y[d, a, b] = x[a, b, d]
        assert_eq!(tape.value(y).data()[3], 12.0);
        let z = tape.permute(y, &[1, 2, 0]).unwrap();
        assert_eq!(tape.value(z), tape.value(x));
    }
}
