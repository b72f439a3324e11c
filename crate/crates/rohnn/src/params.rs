//! Central parameter store shared by networks, losses, and the optimizer.
//!
//! Networks hold [`ParamId`] handles into a [`ParamStore`]; every loss
//! evaluation opens a fresh [`crate::graph::GraphContext`] and binds the
//! parameters it touches as trainable leaves through a [`Binder`]. Gradients
//! come back keyed by the same ids, which is also how the optimizer addresses
//! its slots.

use std::collections::HashMap;

use crate::graph::{GraphContext, PairSlot, Value};
use crate::manifolds::{BiorthPoint, SpdPoint};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Learning-rate group a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Autoencoder weights and biases.
    Ae,
    /// Latent Hamiltonian network parameters (including the integrator
    /// binding weight).
    Hnn,
}

#[derive(Debug, Clone)]
pub enum ParamValue {
    Tensor(Tensor),
    Biorth(BiorthPoint),
    Spd(SpdPoint),
}

impl ParamValue {
    /// Squared Euclidean norm of the raw entries (used by the L2 loss term).
    pub fn norm_sq(&self) -> f64 {
        match self {
            ParamValue::Tensor(t) => t.norm_sq(),
            ParamValue::Biorth(b) => b.phi().norm_sq() + b.psi().norm_sq(),
            ParamValue::Spd(p) => p.matrix().norm_sq(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamDecl {
    pub name: String,
    pub group: ParamGroup,
    pub value: ParamValue,
}

/// Append-only arena of named, grouped parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamDecl>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, group: ParamGroup, value: ParamValue) -> ParamId {
        self.entries.push(ParamDecl { name: name.into(), group, value });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &ParamValue {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamValue {
        &mut self.entries[id.0].value
    }

    pub fn decl(&self, id: ParamId) -> &ParamDecl {
        &self.entries[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamDecl)> {
        self.entries.iter().enumerate().map(|(i, d)| (ParamId(i), d))
    }

    /// `‖θ‖²` over every registered parameter.
    pub fn l2_norm_sq(&self) -> f64 {
        self.entries.iter().map(|d| d.value.norm_sq()).sum()
    }
}

/// Graph leaf(s) a bound parameter expands to.
#[derive(Debug, Clone, Copy)]
pub enum Bound {
    One(Value),
    Pair { phi: Value, psi: Value },
}

/// Binds parameters of one store into one graph, caching leaves so a
/// parameter used twice shares a single node.
pub struct Binder<'a> {
    pub store: &'a ParamStore,
    pub ctx: &'a mut GraphContext,
    bound: HashMap<usize, Bound>,
}

impl<'a> Binder<'a> {
    pub fn new(store: &'a ParamStore, ctx: &'a mut GraphContext) -> Self {
        Binder { store, ctx, bound: HashMap::new() }
    }

    /// Bind a Euclidean tensor parameter as a trainable leaf.
    pub fn tensor(&mut self, id: ParamId) -> Value {
        if let Some(Bound::One(v)) = self.bound.get(&id.0) {
            return *v;
        }
        let ParamValue::Tensor(t) = self.store.get(id) else {
            panic!("parameter {} bound as tensor but is not one", self.store.decl(id).name)
        };
        let v = self.ctx.param_leaf(t.clone(), id.0, PairSlot::Solo);
        self.bound.insert(id.0, Bound::One(v));
        v
    }

    /// Bind a biorthogonal pair parameter as two trainable leaves.
    pub fn pair(&mut self, id: ParamId) -> (Value, Value) {
        if let Some(Bound::Pair { phi, psi }) = self.bound.get(&id.0) {
            return (*phi, *psi);
        }
        let ParamValue::Biorth(b) = self.store.get(id) else {
            panic!("parameter {} bound as pair but is not one", self.store.decl(id).name)
        };
        let phi = self.ctx.param_leaf(b.phi().clone(), id.0, PairSlot::Phi);
        let psi = self.ctx.param_leaf(b.psi().clone(), id.0, PairSlot::Psi);
        self.bound.insert(id.0, Bound::Pair { phi, psi });
        (phi, psi)
    }

    /// `Σ‖θ‖²` as a differentiable graph value over all declared parameters.
    pub fn l2_term(&mut self) -> Value {
        let ids: Vec<(ParamId, bool)> = self
            .store
            .iter()
            .map(|(id, d)| (id, matches!(d.value, ParamValue::Biorth(_))))
            .collect();
        let mut total = self.ctx.scalar(0.0);
        for (id, is_pair) in ids {
            if is_pair {
                let (phi, psi) = self.pair(id);
                let a = self.ctx.norm_sq(phi);
                let b = self.ctx.norm_sq(psi);
                total = self.ctx.add(total, a);
                total = self.ctx.add(total, b);
            } else {
                match self.store.get(id) {
                    ParamValue::Tensor(_) => {
                        let v = self.tensor(id);
                        let n = self.ctx.norm_sq(v);
                        total = self.ctx.add(total, n);
                    }
                    ParamValue::Spd(_) => {
                        // SPD basepoints are held fixed; they do not enter the
                        // decay term.
                    }
                    ParamValue::Biorth(_) => unreachable!(),
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ParamGrad;

    #[test]
    fn bind_caches_leaves() {
        let mut store = ParamStore::new();
        let id = store.register("w", ParamGroup::Hnn, ParamValue::Tensor(Tensor::scalar(2.0)));
        let mut ctx = GraphContext::new();
        let mut b = Binder::new(&store, &mut ctx);
        let v1 = b.tensor(id);
        let v2 = b.tensor(id);
        assert_eq!(v1, v2);
    }

    #[test]
    fn gradients_key_by_param() {
        let mut store = ParamStore::new();
        let id = store.register("w", ParamGroup::Hnn, ParamValue::Tensor(Tensor::scalar(3.0)));
        let mut ctx = GraphContext::new();
        let mut b = Binder::new(&store, &mut ctx);
        let w = b.tensor(id);
        let f = ctx.mul(w, w);
        let grads = ctx.backward(f).unwrap();
        match grads.get(&id.0).unwrap() {
            ParamGrad::Tensor(t) => assert_eq!(t.item(), 6.0),
            _ => panic!("expected tensor grad"),
        }
    }
}
