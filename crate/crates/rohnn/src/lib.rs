//! Learning low-dimensional Hamiltonian surrogate models of high-dimensional
//! dynamical systems.
//!
//! The library couples a geometrically-constrained symplectic autoencoder
//! (the cotangent lift of a biorthogonal constrained autoencoder) with a
//! latent geometric Hamiltonian network, integrates the learned flow with a
//! structure-preserving splitting integrator, and trains everything jointly
//! by Riemannian optimization over a product of Euclidean, SPD and
//! biorthogonal parameter manifolds.
//!
//! Module map:
//!
//! * [`tensor`], [`graph`], [`linalg`] — dense tensors, the differentiable
//!   tape (reverse gradients + forward tangents), and numerical kernels.
//! * [`manifolds`] — SPD (affine-invariant) and biorthogonal geometry.
//! * [`optim`] — Riemannian Adam over mixed parameter manifolds.
//! * [`nets`] — MLPs, invertible activation pairs, SPD-valued networks, the
//!   biorthogonal constrained autoencoder.
//! * [`lift`] — cotangent-lifted symplectic embedding/reduction, plus linear
//!   SVD-based and weakly-symplectic baselines.
//! * [`hamiltonian`] — latent energy models, dissipation, force embedding.
//! * [`integrate`] — splitting/leapfrog/RK4/Euler steps and rollouts.
//! * [`systems`] — benchmark data generators and the dataset file format.
//! * [`train`] — losses, the joint training loop, evaluation metrics.
//! * [`model`] — the composite model and its serialized container format.
//! * [`config`] — the key = value experiment-configuration dialect.
//!
//! The `book/` directory of the repository walks through the same material
//! chapter by chapter; its code snippets compile as doc-tests of this crate.

pub mod error;
pub mod graph;
pub mod linalg;
pub mod manifolds;
pub mod optim;
pub mod params;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
