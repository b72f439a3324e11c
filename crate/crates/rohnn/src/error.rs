//! Library-wide error type.
//!
//! Numerical failure modes (non-finite values, singular solves, diverging
//! rollouts) are first-class errors rather than silent states: every layer
//! that can detect them reports them here.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{op}: matrix is not symmetric (asymmetry {asymmetry:.3e} exceeds {tol:.1e})")]
    NotSymmetric {
        op: &'static str,
        asymmetry: f64,
        tol: f64,
    },

    #[error("{op}: matrix is not positive definite (min eigenvalue {min_eig:.3e})")]
    NotSpd { op: &'static str, min_eig: f64 },

    #[error("{op}: singular or ill-conditioned system (condition estimate {cond:.3e})")]
    IllConditioned { op: &'static str, cond: f64 },

    #[error("state norm {norm:.3e} exceeded divergence guard {guard:.1e} at step {step}")]
    DivergenceGuard { norm: f64, guard: f64, step: usize },

    #[error("rank deficiency: requested {requested} modes, numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("particle collision: pair ({i}, {j}) distance {dist:.3e} below 1e-6 at t = {t:.4}")]
    ParticleCollision { i: usize, j: usize, dist: f64, t: f64 },

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("dataset format error: {0}")]
    Format(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("missing derivative channels: {0}")]
    MissingDerivatives(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
