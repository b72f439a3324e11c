//! Riemannian Adam over a product of Euclidean, SPD and biorthogonal
//! parameter manifolds.
//!
//! Each step performs, per parameter slot, the three manifold operations of
//! first-order Riemannian optimization: convert the Euclidean gradient to a
//! Riemannian one, move the point along the (bias-corrected, moment-filtered)
//! search direction via the exponential map or retraction, and transport the
//! first moment to the new tangent space. With only Euclidean slots the step
//! reduces exactly to standard Adam.
//!
//! Second moments are per-coordinate on Euclidean slots and a single
//! norm-based scalar on manifold slots, where coordinates carry no metric
//! meaning.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{GradientMap, ParamGrad};
use crate::manifolds::{
    bio_project, bio_retract, bio_transport, spd_exp, spd_inner, spd_transport, BiorthTangent,
};
use crate::params::{ParamGroup, ParamId, ParamStore, ParamValue};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        AdamConfig { lr, ..Default::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        // betas/eps follow the common Adam defaults
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state of one parameter.
#[derive(Debug, Clone)]
enum SlotState {
    Euclidean { m: Tensor, v: Tensor },
    Spd { m: Tensor, v: f64 },
    Biorth { m: BiorthTangent, v: f64 },
}

#[derive(Debug, Clone)]
struct Slot {
    cfg: AdamConfig,
    state: SlotState,
    step_count: u32,
}

/// Per-group learning rates, mirroring the training defaults: one rate for
/// the autoencoder parameters and one for the latent network parameters.
#[derive(Debug, Clone, Copy)]
pub struct GroupRates {
    pub lr_ae: f64,
    pub lr_hnn: f64,
}

/// Assign every registered parameter its group configuration.
///
/// Errors are impossible here by construction (every parameter carries its
/// group tag); an empty store yields an empty grouping.
pub fn param_groups(store: &ParamStore, rates: GroupRates) -> Vec<(ParamId, AdamConfig)> {
    store
        .iter()
        .map(|(id, decl)| {
            let lr = match decl.group {
                ParamGroup::Ae => rates.lr_ae,
                ParamGroup::Hnn => rates.lr_hnn,
            };
            (id, AdamConfig::with_lr(lr))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RiemannianAdam {
    slots: BTreeMap<usize, Slot>,
}

impl RiemannianAdam {
    /// One slot per store entry, with the per-group configuration.
    pub fn new(store: &ParamStore, groups: Vec<(ParamId, AdamConfig)>) -> Self {
        let mut slots = BTreeMap::new();
        for (id, cfg) in groups {
            let state = match store.get(id) {
                ParamValue::Tensor(t) => SlotState::Euclidean {
                    m: Tensor::zeros(t.shape()),
                    v: Tensor::zeros(t.shape()),
                },
                ParamValue::Spd(p) => SlotState::Spd {
                    m: Tensor::zeros(&[p.dim(), p.dim()]),
                    v: 0.0,
                },
                ParamValue::Biorth(b) => SlotState::Biorth {
                    m: BiorthTangent::zeros(b.rows(), b.cols()),
                    v: 0.0,
                },
            };
            slots.insert(id.0, Slot { cfg, state, step_count: 0 });
        }
        RiemannianAdam { slots }
    }

    pub fn with_uniform(store: &ParamStore, cfg: AdamConfig) -> Self {
        let groups = store.iter().map(|(id, _)| (id, cfg)).collect();
        Self::new(store, groups)
    }

    /// Apply one Adam step. Parameters absent from `grads` receive a zero
    /// gradient; gradients for unregistered parameters are an error.
    pub fn step(&mut self, store: &mut ParamStore, grads: &GradientMap) -> Result<()> {
        for idx in grads.keys() {
            if !self.slots.contains_key(idx) {
                return Err(Error::InvalidArgument(format!(
                    "gradient for unregistered parameter index {idx}"
                )));
            }
        }
        let ids: Vec<usize> = self.slots.keys().copied().collect();
        for idx in ids {
            self.step_slot(store, idx, grads.get(&idx))?;
        }
        Ok(())
    }

    fn step_slot(&mut self, store: &mut ParamStore, idx: usize, grad: Option<&ParamGrad>) -> Result<()> {
        let slot = self.slots.get_mut(&idx).expect("slot exists");
        slot.step_count += 1;
        let t = slot.step_count;
        let AdamConfig { lr, beta1, beta2, eps } = slot.cfg;
        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);

        match (&mut slot.state, store.get_mut(ParamId(idx))) {
            (SlotState::Euclidean { m, v }, ParamValue::Tensor(point)) => {
                let zero;
                let g = match grad {
                    Some(ParamGrad::Tensor(g)) => g,
                    None => {
                        zero = Tensor::zeros(point.shape());
                        &zero
                    }
                    Some(_) => {
                        return Err(Error::InvalidArgument(format!(
                            "paired gradient for euclidean parameter {idx}"
                        )))
                    }
                };
                g.ensure_finite("adam_step gradient")?;
                // standard per-coordinate Adam recursion
                let pm = m.data_mut();
                let pv = v.data_mut();
                let px = point.data_mut();
                for k in 0..px.len() {
                    let gk = g.data()[k];
                    pm[k] = beta1 * pm[k] + (1.0 - beta1) * gk;
                    pv[k] = beta2 * pv[k] + (1.0 - beta2) * gk * gk;
                    let mhat = pm[k] / bc1;
                    let vhat = pv[k] / bc2;
                    px[k] -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
            (SlotState::Spd { m, v }, ParamValue::Spd(point)) => {
                let g = match grad {
                    Some(ParamGrad::Tensor(g)) => g.clone(),
                    None => Tensor::zeros(&[point.dim(), point.dim()]),
                    Some(_) => {
                        return Err(Error::InvalidArgument(format!(
                            "paired gradient for SPD parameter {idx}"
                        )))
                    }
                };
                g.ensure_finite("adam_step gradient")?;
                // Euclidean → Riemannian gradient under the affine-invariant
                // metric: G ↦ P sym(G) P
                let r = point
                    .matrix()
                    .matmul(&g.symmetrize())
                    .matmul(point.matrix())
                    .symmetrize();
                *m = m.scale(beta1).add(&r.scale(1.0 - beta1));
                *v = beta2 * *v + (1.0 - beta2) * spd_inner(point, &r, &r);
                let direction = m.scale(1.0 / bc1).scale(1.0 / ((*v / bc2).sqrt() + eps));
                let new_point = spd_exp(point, &direction.scale(-lr))?;
                *m = spd_transport(point, &new_point, m)?;
                *point = new_point;
            }
            (SlotState::Biorth { m, v }, ParamValue::Biorth(point)) => {
                let (gphi, gpsi) = match grad {
                    Some(ParamGrad::Pair { phi, psi }) => (
                        phi.clone().unwrap_or_else(|| Tensor::zeros(&[point.rows(), point.cols()])),
                        psi.clone().unwrap_or_else(|| Tensor::zeros(&[point.rows(), point.cols()])),
                    ),
                    None => (
                        Tensor::zeros(&[point.rows(), point.cols()]),
                        Tensor::zeros(&[point.rows(), point.cols()]),
                    ),
                    Some(_) => {
                        return Err(Error::InvalidArgument(format!(
                            "tensor gradient for biorthogonal parameter {idx}"
                        )))
                    }
                };
                gphi.ensure_finite("adam_step gradient")?;
                gpsi.ensure_finite("adam_step gradient")?;
                let r = bio_project(point, &gphi, &gpsi)?;
                *m = m.scale(beta1).add(&r.scale(1.0 - beta1));
                *v = beta2 * *v + (1.0 - beta2) * r.norm_sq();
                let direction = m.scale(1.0 / bc1).scale(1.0 / ((*v / bc2).sqrt() + eps));
                let new_point = bio_retract(point, &direction.scale(-lr))?;
                *m = bio_transport(point, &new_point, m)?;
                *point = new_point;
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "slot state and parameter value disagree for index {idx}"
                )))
            }
        }
        Ok(())
    }
}
