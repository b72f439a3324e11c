//! Dynamically built differentiable computation graphs.
//!
//! A [`GraphContext`] is an append-only tape of primitive operations over
//! [`Tensor`]s. Each recorded node stores its primal value and the handles of
//! its parents; the tape supports two differentiation modes:
//!
//! * **Reverse mode** ([`GraphContext::backward`]): adjoints of a scalar
//!   output with respect to every trainable leaf, visiting nodes in reverse
//!   creation order exactly once.
//! * **Forward mode** ([`GraphContext::pushforward`] / [`GraphContext::jvp`]):
//!   directional derivatives with respect to designated inputs. Tangents are
//!   materialized as *new graph nodes* built from the same primitives, so a
//!   tangent-carrying result remains differentiable by a later backward pass
//!   (forward-over-reverse). This is how Jacobians of encoders, decoders and
//!   energy functions enter training losses.
//!
//! A context is single-owner while under construction; independent contexts
//! may be evaluated concurrently.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node in a [`GraphContext`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Value(pub(crate) usize);

impl Value {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Which half of a paired parameter a leaf binds, for gradient routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSlot {
    Solo,
    Phi,
    Psi,
}

/// Gradient of one parameter entry, keyed by the slot it was bound under.
#[derive(Debug, Clone)]
pub enum ParamGrad {
    Tensor(Tensor),
    Pair {
        phi: Option<Tensor>,
        psi: Option<Tensor>,
    },
}

/// Map from raw parameter index to accumulated gradient.
pub type GradientMap = BTreeMap<usize, ParamGrad>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    MaxScalar(usize, f64),
    Sqrt(usize),
    Sigmoid(usize),
    Softplus(usize),
    Sum(usize),
    MatMul(usize, usize),
    MatVec(usize, usize),
    Transpose(usize),
    DiagEmbed(usize),
    SymFromTriu(usize),
    StrictLowerFromVec(usize),
    Slice {
        parent: usize,
        start: usize,
        len: usize,
    },
    StackVec(Vec<usize>),
    StackCols(Vec<usize>),
}

impl Op {
    fn parents(&self, out: &mut Vec<usize>) {
        match self {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                out.push(*a);
                out.push(*b);
            }
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Offset(a)
            | Op::MaxScalar(a, _)
            | Op::Sqrt(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::Sum(a)
            | Op::Transpose(a)
            | Op::DiagEmbed(a)
            | Op::SymFromTriu(a)
            | Op::StrictLowerFromVec(a)
            | Op::Slice { parent: a, .. } => out.push(*a),
            Op::MatMul(a, b) | Op::MatVec(a, b) => {
                out.push(*a);
                out.push(*b);
            }
            Op::StackVec(ps) | Op::StackCols(ps) => out.extend_from_slice(ps),
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    primal: Tensor,
    /// `Some((param index, slot))` for leaves bound to trainable parameters.
    param: Option<(usize, PairSlot)>,
}

/// Append-only differentiable tape. See the module docs.
#[derive(Debug, Default)]
pub struct GraphContext {
    nodes: Vec<Node>,
}

fn softplus_f(x: f64) -> f64 {
    // ln(1 + e^x), stable on both tails
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid_f(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dimension of the packed upper triangle of a `d×d` symmetric matrix.
pub fn triu_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Dimension `d` such that `triu_len(d) == len`, if any.
pub fn triu_dim(len: usize) -> Option<usize> {
    let mut d = 0;
    while triu_len(d) < len {
        d += 1;
    }
    (triu_len(d) == len).then_some(d)
}

impl GraphContext {
    pub fn new() -> Self {
        GraphContext { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn primal(&self, v: Value) -> &Tensor {
        &self.nodes[v.0].primal
    }

    pub fn shape(&self, v: Value) -> &[usize] {
        self.nodes[v.0].primal.shape()
    }

    fn push(&mut self, op: Op, primal: Tensor) -> Value {
        self.nodes.push(Node { op, primal, param: None });
        Value(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, t: Tensor) -> Value {
        self.push(Op::Leaf, t)
    }

    pub fn scalar(&mut self, x: f64) -> Value {
        self.constant(Tensor::scalar(x))
    }

    /// Designated input: a leaf intended to receive forward-mode seeds.
    pub fn input(&mut self, t: Tensor) -> Value {
        self.constant(t)
    }

    /// Trainable leaf bound to parameter `index` under `slot`.
    pub fn param_leaf(&mut self, t: Tensor, index: usize, slot: PairSlot) -> Value {
        let v = self.push(Op::Leaf, t);
        self.nodes[v.0].param = Some((index, slot));
        v
    }

    // ---- elementwise ----

    fn bin_shape(&self, a: Value, b: Value, op: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{op}: shape {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
    }

    pub fn add(&mut self, a: Value, b: Value) -> Value {
        self.bin_shape(a, b, "add");
        let p = self.nodes[a.0].primal.add(&self.nodes[b.0].primal);
        self.push(Op::Add(a.0, b.0), p)
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Value {
        self.bin_shape(a, b, "sub");
        let p = self.nodes[a.0].primal.sub(&self.nodes[b.0].primal);
        self.push(Op::Sub(a.0, b.0), p)
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Value {
        self.bin_shape(a, b, "mul");
        let p = self.nodes[a.0].primal.mul(&self.nodes[b.0].primal);
        self.push(Op::Mul(a.0, b.0), p)
    }

    pub fn div(&mut self, a: Value, b: Value) -> Value {
        self.bin_shape(a, b, "div");
        let p = self.nodes[a.0].primal.div(&self.nodes[b.0].primal);
        self.push(Op::Div(a.0, b.0), p)
    }

    pub fn neg(&mut self, a: Value) -> Value {
        let p = self.nodes[a.0].primal.neg();
        self.push(Op::Neg(a.0), p)
    }

    pub fn scale(&mut self, a: Value, c: f64) -> Value {
        let p = self.nodes[a.0].primal.scale(c);
        self.push(Op::Scale(a.0, c), p)
    }

    pub fn offset(&mut self, a: Value, c: f64) -> Value {
        let p = self.nodes[a.0].primal.map(|x| x + c);
        self.push(Op::Offset(a.0), p)
    }

    pub fn max_scalar(&mut self, a: Value, c: f64) -> Value {
        let p = self.nodes[a.0].primal.map(|x| x.max(c));
        self.push(Op::MaxScalar(a.0, c), p)
    }

    pub fn sqrt(&mut self, a: Value) -> Value {
        let p = self.nodes[a.0].primal.map(f64::sqrt);
        self.push(Op::Sqrt(a.0), p)
    }

    pub fn sigmoid(&mut self, a: Value) -> Value {
        let p = self.nodes[a.0].primal.map(sigmoid_f);
        self.push(Op::Sigmoid(a.0), p)
    }

    pub fn softplus(&mut self, a: Value) -> Value {
        let p = self.nodes[a.0].primal.map(softplus_f);
        self.push(Op::Softplus(a.0), p)
    }

    /// Sum of all entries, as a rank-0 value.
    pub fn sum(&mut self, a: Value) -> Value {
        let p = Tensor::scalar(self.nodes[a.0].primal.sum());
        self.push(Op::Sum(a.0), p)
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Value, b: Value) -> Value {
        let p = self.nodes[a.0].primal.matmul(&self.nodes[b.0].primal);
        self.push(Op::MatMul(a.0, b.0), p)
    }

    pub fn matvec(&mut self, a: Value, v: Value) -> Value {
        let p = self.nodes[a.0].primal.matvec(&self.nodes[v.0].primal);
        self.push(Op::MatVec(a.0, v.0), p)
    }

    pub fn transpose(&mut self, a: Value) -> Value {
        let p = self.nodes[a.0].primal.transpose();
        self.push(Op::Transpose(a.0), p)
    }

    /// Vector `v` placed on the diagonal of a square matrix.
    pub fn diag_embed(&mut self, v: Value) -> Value {
        let pv = &self.nodes[v.0].primal;
        assert_eq!(pv.rank(), 1, "diag_embed expects a vector");
        let n = pv.shape()[0];
        let mut m = Tensor::zeros(&[n, n]);
        for i in 0..n {
            m.set2(i, i, pv.data()[i]);
        }
        self.push(Op::DiagEmbed(v.0), m)
    }

    /// Packed row-major upper triangle `v` (length `d(d+1)/2`) expanded to a
    /// symmetric `d×d` matrix.
    pub fn sym_from_triu(&mut self, v: Value) -> Value {
        let pv = &self.nodes[v.0].primal;
        assert_eq!(pv.rank(), 1, "sym_from_triu expects a vector");
        let d = triu_dim(pv.len()).expect("sym_from_triu: length is not d(d+1)/2");
        let mut m = Tensor::zeros(&[d, d]);
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                m.set2(i, j, pv.data()[k]);
                m.set2(j, i, pv.data()[k]);
                k += 1;
            }
        }
        self.push(Op::SymFromTriu(v.0), m)
    }

    /// Packed row-major strict lower triangle `v` (length `d(d-1)/2`) expanded
    /// to a strictly lower-triangular `d×d` matrix.
    pub fn strict_lower_from_vec(&mut self, v: Value, d: usize) -> Value {
        let pv = &self.nodes[v.0].primal;
        assert_eq!(pv.len(), d * (d - 1) / 2, "strict_lower_from_vec length");
        let mut m = Tensor::zeros(&[d, d]);
        let mut k = 0;
        for i in 1..d {
            for j in 0..i {
                m.set2(i, j, pv.data()[k]);
                k += 1;
            }
        }
        self.push(Op::StrictLowerFromVec(v.0), m)
    }

    pub fn slice(&mut self, v: Value, start: usize, len: usize) -> Value {
        let p = self.nodes[v.0].primal.slice_vec(start, len);
        self.push(Op::Slice { parent: v.0, start, len }, p)
    }

    /// Stack rank-0 values into a vector.
    pub fn stack_vec(&mut self, parts: &[Value]) -> Value {
        let data = parts
            .iter()
            .map(|v| {
                assert!(self.nodes[v.0].primal.is_scalar(), "stack_vec expects scalars");
                self.nodes[v.0].primal.item()
            })
            .collect();
        self.push(Op::StackVec(parts.iter().map(|v| v.0).collect()), Tensor::vector(data))
    }

    /// Stack equal-length vectors as the columns of a matrix.
    pub fn stack_cols(&mut self, parts: &[Value]) -> Value {
        assert!(!parts.is_empty(), "stack_cols of nothing");
        let n = self.nodes[parts[0].0].primal.len();
        let k = parts.len();
        let mut m = Tensor::zeros(&[n, k]);
        for (j, v) in parts.iter().enumerate() {
            let pv = &self.nodes[v.0].primal;
            assert_eq!(pv.rank(), 1, "stack_cols expects vectors");
            assert_eq!(pv.len(), n, "stack_cols: ragged columns");
            for i in 0..n {
                m.set2(i, j, pv.data()[i]);
            }
        }
        self.push(Op::StackCols(parts.iter().map(|v| v.0).collect()), m)
    }

    // ---- composites used throughout ----

    pub fn dot(&mut self, a: Value, b: Value) -> Value {
        let m = self.mul(a, b);
        self.sum(m)
    }

    pub fn norm_sq(&mut self, a: Value) -> Value {
        self.dot(a, a)
    }

    /// `a + c·b`.
    pub fn add_scaled(&mut self, a: Value, b: Value, c: f64) -> Value {
        let sb = self.scale(b, c);
        self.add(a, sb)
    }

    /// Symmetric part `(A + Aᵀ)/2`.
    pub fn sym_part(&mut self, a: Value) -> Value {
        let at = self.transpose(a);
        let s = self.add(a, at);
        self.scale(s, 0.5)
    }

    // ---- reverse mode ----

    /// Reverse-mode pass from a scalar `output`.
    ///
    /// Returns `∂output/∂θ` for every trainable leaf that influences the
    /// output; adjoints of non-parameter nodes are discarded. Errors if the
    /// output is not scalar or a non-finite adjoint appears during
    /// accumulation.
    pub fn backward(&self, output: Value) -> Result<GradientMap> {
        if !self.nodes[output.0].primal.is_scalar() {
            return Err(Error::Shape {
                op: "backward",
                expected: "scalar output".into(),
                got: format!("{:?}", self.shape(output)),
            });
        }
        let mut adj: Vec<Option<Tensor>> = Vec::new();
        adj.resize_with(output.0 + 1, || None);
        adj[output.0] = Some(Tensor::scalar(1.0));
        let mut grads: GradientMap = BTreeMap::new();

        for id in (0..=output.0).rev() {
            let Some(a) = adj[id].take() else { continue };
            a.ensure_finite("backward accumulation")?;
            let node = &self.nodes[id];
            self.accumulate_parents(id, &a, &mut adj);
            if let Some((pidx, slot)) = node.param {
                record_grad(&mut grads, pidx, slot, a);
            }
        }
        Ok(grads)
    }

    fn accumulate_parents(&self, id: usize, a: &Tensor, adj: &mut [Option<Tensor>]) {
        let prim = |i: usize| &self.nodes[i].primal;
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(x, y) => {
                acc(adj, *x, a.clone());
                acc(adj, *y, a.clone());
            }
            Op::Sub(x, y) => {
                acc(adj, *x, a.clone());
                acc(adj, *y, a.neg());
            }
            Op::Mul(x, y) => {
                acc(adj, *x, a.mul(prim(*y)));
                acc(adj, *y, a.mul(prim(*x)));
            }
            Op::Div(x, y) => {
                // t = x/y: dx += a/y, dy += -a·t/y
                let t = prim(id);
                acc(adj, *x, a.div(prim(*y)));
                acc(adj, *y, a.mul(t).div(prim(*y)).neg());
            }
            Op::Neg(x) => acc(adj, *x, a.neg()),
            Op::Scale(x, c) => acc(adj, *x, a.scale(*c)),
            Op::Offset(x) => acc(adj, *x, a.clone()),
            Op::MaxScalar(x, c) => {
                let mask = prim(*x).map(|v| if v > *c { 1.0 } else { 0.0 });
                acc(adj, *x, a.mul(&mask));
            }
            Op::Sqrt(x) => {
                // d√x = a / (2√x)
                let half = prim(id).map(|s| 0.5 / s);
                acc(adj, *x, a.mul(&half));
            }
            Op::Sigmoid(x) => {
                let d = prim(id).map(|s| s * (1.0 - s));
                acc(adj, *x, a.mul(&d));
            }
            Op::Softplus(x) => {
                let d = prim(*x).map(sigmoid_f);
                acc(adj, *x, a.mul(&d));
            }
            Op::Sum(x) => {
                let v = a.item();
                acc(adj, *x, prim(*x).map(|_| v));
            }
            Op::MatMul(x, y) => {
                acc(adj, *x, a.matmul(&prim(*y).transpose()));
                acc(adj, *y, prim(*x).transpose().matmul(a));
            }
            Op::MatVec(x, v) => {
                acc(adj, *x, Tensor::outer(a, prim(*v)));
                acc(adj, *v, prim(*x).transpose().matvec(a));
            }
            Op::Transpose(x) => acc(adj, *x, a.transpose()),
            Op::DiagEmbed(v) => {
                let n = prim(*v).len();
                let mut g = Tensor::zeros(&[n]);
                for i in 0..n {
                    g.data_mut()[i] = a.get2(i, i);
                }
                acc(adj, *v, g);
            }
            Op::SymFromTriu(v) => {
                let d = prim(id).rows();
                let mut g = Tensor::zeros(&[triu_len(d)]);
                let mut k = 0;
                for i in 0..d {
                    for j in i..d {
                        g.data_mut()[k] = if i == j {
                            a.get2(i, i)
                        } else {
                            a.get2(i, j) + a.get2(j, i)
                        };
                        k += 1;
                    }
                }
                acc(adj, *v, g);
            }
            Op::StrictLowerFromVec(v) => {
                let d = prim(id).rows();
                let mut g = Tensor::zeros(&[d * (d - 1) / 2]);
                let mut k = 0;
                for i in 1..d {
                    for j in 0..i {
                        g.data_mut()[k] = a.get2(i, j);
                        k += 1;
                    }
                }
                acc(adj, *v, g);
            }
            Op::Slice { parent, start, len } => {
                let mut g = Tensor::zeros(&[prim(*parent).len()]);
                g.data_mut()[*start..*start + *len].copy_from_slice(a.data());
                acc(adj, *parent, g);
            }
            Op::StackVec(ps) => {
                for (k, p) in ps.iter().enumerate() {
                    acc(adj, *p, Tensor::scalar(a.data()[k]));
                }
            }
            Op::StackCols(ps) => {
                let n = a.rows();
                for (k, p) in ps.iter().enumerate() {
                    let mut g = Tensor::zeros(&[n]);
                    for i in 0..n {
                        g.data_mut()[i] = a.get2(i, k);
                    }
                    acc(adj, *p, g);
                }
            }
        }
    }

    // ---- forward mode ----

    /// Forward-mode sweep over the whole tape.
    ///
    /// `seeds` assigns a tangent value to designated inputs; tangents then
    /// propagate to every reachable node by the chain rule, materialized as
    /// new graph nodes. Returns, for each node present before the call, the
    /// handle of its tangent (`None` = identically zero).
    pub fn pushforward(&mut self, seeds: &[(Value, Value)]) -> Result<Vec<Option<Value>>> {
        let upto = self.nodes.len();
        let mark = vec![true; upto];
        self.propagate_tangents(&mark, seeds)
    }

    /// Tangents of `outputs` only, sweeping just their ancestor subgraph.
    pub fn jvp(&mut self, outputs: &[Value], seeds: &[(Value, Value)]) -> Result<Vec<Option<Value>>> {
        let upto = self.nodes.len();
        let mut mark = vec![false; upto];
        let mut stack: Vec<usize> = outputs.iter().map(|v| v.0).collect();
        let mut parents = Vec::new();
        while let Some(id) = stack.pop() {
            if mark[id] {
                continue;
            }
            mark[id] = true;
            parents.clear();
            self.nodes[id].op.parents(&mut parents);
            stack.extend_from_slice(&parents);
        }
        let tangents = self.propagate_tangents(&mark, seeds)?;
        Ok(outputs.iter().map(|v| tangents[v.0]).collect())
    }

    fn propagate_tangents(
        &mut self,
        mark: &[bool],
        seeds: &[(Value, Value)],
    ) -> Result<Vec<Option<Value>>> {
        let upto = mark.len();
        let mut tan: Vec<Option<Value>> = vec![None; upto];
        for (input, seed) in seeds {
            if self.shape(*input) != self.shape(*seed) {
                return Err(Error::Shape {
                    op: "pushforward",
                    expected: format!("{:?}", self.shape(*input)),
                    got: format!("{:?}", self.shape(*seed)),
                });
            }
            if input.0 < upto {
                tan[input.0] = Some(*seed);
            }
        }
        for id in 0..upto {
            if !mark[id] || tan[id].is_some() {
                continue;
            }
            tan[id] = self.tangent_of(id, &tan);
        }
        Ok(tan)
    }

    /// Build the tangent node of `id` from its parents' tangents.
    fn tangent_of(&mut self, id: usize, tan: &[Option<Value>]) -> Option<Value> {
        let t = |p: usize| tan[p];
        let op = self.nodes[id].op.clone();
        match op {
            Op::Leaf => None,
            Op::Add(x, y) => match (t(x), t(y)) {
                (Some(tx), Some(ty)) => Some(self.add(tx, ty)),
                (Some(tx), None) => Some(tx),
                (None, Some(ty)) => Some(ty),
                (None, None) => None,
            },
            Op::Sub(x, y) => match (t(x), t(y)) {
                (Some(tx), Some(ty)) => Some(self.sub(tx, ty)),
                (Some(tx), None) => Some(tx),
                (None, Some(ty)) => Some(self.neg(ty)),
                (None, None) => None,
            },
            Op::Mul(x, y) => {
                let a = t(x).map(|tx| self.mul_with_primal(tx, y));
                let b = t(y).map(|ty| self.mul_with_primal(ty, x));
                self.opt_add(a, b)
            }
            Op::Div(x, y) => {
                // d(x/y) = (ẋ − t·ẏ)/y with t = x/y
                let num = match (t(x), t(y)) {
                    (tx, Some(ty)) => {
                        let ty_t = self.mul_with_primal(ty, id);
                        match tx {
                            Some(tx) => Some(self.sub(tx, ty_t)),
                            None => Some(self.neg(ty_t)),
                        }
                    }
                    (Some(tx), None) => Some(tx),
                    (None, None) => None,
                };
                num.map(|n| self.div_by_primal(n, y))
            }
            Op::Neg(x) => t(x).map(|tx| self.neg(tx)),
            Op::Scale(x, c) => t(x).map(|tx| self.scale(tx, c)),
            Op::Offset(x) => t(x),
            Op::MaxScalar(x, c) => t(x).map(|tx| {
                let mask = self.nodes[x].primal.map(|v| if v > c { 1.0 } else { 0.0 });
                let mask = self.constant(mask);
                self.mul(tx, mask)
            }),
            Op::Sqrt(x) => t(x).map(|tx| {
                // ẋ / (2√x)
                let out = Value(id);
                let two = self.scale(out, 2.0);
                self.div(tx, two)
            }),
            Op::Sigmoid(x) => t(x).map(|tx| {
                // σ' = σ(1−σ)
                let out = Value(id);
                let one_minus = self.neg_offset_one(out);
                let d = self.mul(out, one_minus);
                self.mul(tx, d)
            }),
            Op::Softplus(x) => t(x).map(|tx| {
                let s = self.sigmoid(Value(x));
                self.mul(tx, s)
            }),
            Op::Sum(x) => t(x).map(|tx| self.sum(tx)),
            Op::MatMul(x, y) => {
                let a = t(x).map(|tx| self.matmul_rhs_primal(tx, y));
                let b = t(y).map(|ty| self.matmul_lhs_primal(x, ty));
                self.opt_add(a, b)
            }
            Op::MatVec(x, v) => {
                let a = t(x).map(|tx| {
                    let pv = Value(v);
                    self.matvec(tx, pv)
                });
                let b = t(v).map(|tv| {
                    let px = Value(x);
                    self.matvec(px, tv)
                });
                self.opt_add(a, b)
            }
            Op::Transpose(x) => t(x).map(|tx| self.transpose(tx)),
            Op::DiagEmbed(x) => t(x).map(|tx| self.diag_embed(tx)),
            Op::SymFromTriu(x) => t(x).map(|tx| self.sym_from_triu(tx)),
            Op::StrictLowerFromVec(x) => t(x).map(|tx| {
                let d = self.nodes[id].primal.rows();
                self.strict_lower_from_vec(tx, d)
            }),
            Op::Slice { parent, start, len } => t(parent).map(|tp| self.slice(tp, start, len)),
            Op::StackVec(ps) => {
                if ps.iter().all(|p| t(*p).is_none()) {
                    return None;
                }
                let parts: Vec<Value> = ps
                    .iter()
                    .map(|p| t(*p).unwrap_or_else(|| self.scalar(0.0)))
                    .collect();
                Some(self.stack_vec(&parts))
            }
            Op::StackCols(ps) => {
                if ps.iter().all(|p| t(*p).is_none()) {
                    return None;
                }
                let parts: Vec<Value> = ps
                    .iter()
                    .map(|p| {
                        t(*p).unwrap_or_else(|| {
                            let n = self.nodes[*p].primal.len();
                            self.constant(Tensor::zeros(&[n]))
                        })
                    })
                    .collect();
                Some(self.stack_cols(&parts))
            }
        }
    }

    fn opt_add(&mut self, a: Option<Value>, b: Option<Value>) -> Option<Value> {
        match (a, b) {
            (Some(x), Some(y)) => Some(self.add(x, y)),
            (Some(x), None) => Some(x),
            (None, Some(y)) => Some(y),
            (None, None) => None,
        }
    }

    fn mul_with_primal(&mut self, t: Value, primal_id: usize) -> Value {
        let p = Value(primal_id);
        self.mul(t, p)
    }

    fn div_by_primal(&mut self, t: Value, primal_id: usize) -> Value {
        let p = Value(primal_id);
        self.div(t, p)
    }

    fn matmul_rhs_primal(&mut self, t: Value, rhs: usize) -> Value {
        let p = Value(rhs);
        self.matmul(t, p)
    }

    fn matmul_lhs_primal(&mut self, lhs: usize, t: Value) -> Value {
        let p = Value(lhs);
        self.matmul(p, t)
    }

    fn neg_offset_one(&mut self, v: Value) -> Value {
        let n = self.neg(v);
        self.offset(n, 1.0)
    }
}

fn acc(adj: &mut [Option<Tensor>], id: usize, t: Tensor) {
    match &mut adj[id] {
        Some(existing) => *existing = existing.add(&t),
        slot @ None => *slot = Some(t),
    }
}

fn record_grad(grads: &mut GradientMap, pidx: usize, slot: PairSlot, a: Tensor) {
    match slot {
        PairSlot::Solo => match grads.get_mut(&pidx) {
            Some(ParamGrad::Tensor(g)) => *g = g.add(&a),
            Some(ParamGrad::Pair { .. }) => unreachable!("param bound under mixed slots"),
            None => {
                grads.insert(pidx, ParamGrad::Tensor(a));
            }
        },
        PairSlot::Phi | PairSlot::Psi => {
            let entry = grads
                .entry(pidx)
                .or_insert(ParamGrad::Pair { phi: None, psi: None });
            let ParamGrad::Pair { phi, psi } = entry else {
                unreachable!("param bound under mixed slots")
            };
            let target = if matches!(slot, PairSlot::Phi) { phi } else { psi };
            match target {
                Some(g) => *g = g.add(&a),
                None => *target = Some(a),
            }
        }
    }
}

/// Differentiable matrix exponential of a symmetric matrix.
///
/// Scaling and squaring with a truncated Taylor series, recorded as a chain
/// of primitive multiplies and adds so both differentiation modes apply. The
/// number of squarings is chosen from the current primal so the scaled
/// Frobenius norm stays below 0.25; each squaring is re-symmetrized, which
/// keeps the output exactly symmetric.
pub fn sym_expm(ctx: &mut GraphContext, s: Value) -> Result<Value> {
    let p = ctx.primal(s);
    if p.rank() != 2 || p.rows() != p.cols() {
        return Err(Error::Shape {
            op: "sym_expm",
            expected: "square matrix".into(),
            got: format!("{:?}", p.shape()),
        });
    }
    let asym = p.asymmetry();
    if asym > 1e-10 {
        return Err(Error::NotSymmetric {
            op: "sym_expm",
            asymmetry: asym,
            tol: 1e-10,
        });
    }
    let d = p.rows();
    let norm = p.norm();
    let mut squarings = 0u32;
    while norm / f64::powi(2.0, squarings as i32) >= 0.25 {
        squarings += 1;
    }
    let a = ctx.scale(s, f64::powi(2.0, -(squarings as i32)));
    let eye = ctx.constant(Tensor::eye(d));

    // Horner form of the degree-10 Taylor polynomial:
    // E = I + A(I + A/2 (I + A/3 (… (I + A/10))))
    const DEGREE: usize = 10;
    let mut e = eye;
    for k in (1..=DEGREE).rev() {
        let ak = ctx.scale(a, 1.0 / k as f64);
        let prod = ctx.matmul(ak, e);
        e = ctx.add(eye, prod);
    }
    for _ in 0..squarings {
        let sq = ctx.matmul(e, e);
        e = ctx.sym_part(sq);
    }
    Ok(e)
}
