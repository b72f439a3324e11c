//! Riemannian geometry of the two parameter manifolds.
//!
//! * SPD matrices with the affine-invariant metric: closed-form exponential
//!   and logarithmic maps, geodesic distance, and parallel transport.
//! * The biorthogonal manifold of weight pairs `(Φ, Ψ)` with `ΨᵀΦ = I`:
//!   tangent-space projection through a Sylvester solve, a first-order
//!   retraction, and projective vector transport. A closed-form exponential
//!   map is not available here, so the retraction/transport approximations
//!   *are* the contract.
//!
//! All operations are pure functions over immutable values; matrix square
//! roots go through symmetric eigendecompositions with eigenvalues clamped at
//! 1e-12.

use crate::error::{Error, Result};
use crate::linalg::{expm_sym, inv_square, solve_sylvester, spd_logm, sqrtm_spd};
use crate::tensor::Tensor;

/// A symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdPoint {
    mat: Tensor,
}

impl SpdPoint {
    /// Validates symmetry (within 1e-10) and positive spectrum.
    pub fn new(mat: Tensor) -> Result<Self> {
        let asym = mat.asymmetry();
        if asym > 1e-10 {
            return Err(Error::NotSymmetric { op: "SpdPoint", asymmetry: asym, tol: 1e-10 });
        }
        let min = crate::linalg::min_eigenvalue(&mat);
        if min <= 0.0 {
            return Err(Error::NotSpd { op: "SpdPoint", min_eig: min });
        }
        Ok(SpdPoint { mat: mat.symmetrize() })
    }

    pub fn identity(n: usize) -> Self {
        SpdPoint { mat: Tensor::eye(n) }
    }

    /// Caller guarantees the SPD property (used where it holds by
    /// construction, e.g. outputs of the exponential map).
    pub fn from_unchecked(mat: Tensor) -> Self {
        SpdPoint { mat }
    }

    pub fn matrix(&self) -> &Tensor {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn into_matrix(self) -> Tensor {
        self.mat
    }
}

/// Affine-invariant inner product `⟨T₁, T₂⟩_Σ = tr(Σ⁻¹ T₁ Σ⁻¹ T₂)`.
pub fn spd_inner(base: &SpdPoint, t1: &Tensor, t2: &Tensor) -> f64 {
    let (_, inv_sqrt) = sqrtm_spd(base.matrix());
    let a = inv_sqrt.matmul(t1).matmul(&inv_sqrt);
    let b = inv_sqrt.matmul(t2).matmul(&inv_sqrt);
    a.dot(&b)
}

/// Exponential map `Exp_Σ(S) = Σ^{1/2} exp(Σ^{-1/2} S Σ^{-1/2}) Σ^{1/2}`.
pub fn spd_exp(base: &SpdPoint, tangent: &Tensor) -> Result<SpdPoint> {
    let asym = tangent.asymmetry();
    if asym > 1e-8 {
        return Err(Error::NotSymmetric { op: "spd_exp", asymmetry: asym, tol: 1e-8 });
    }
    let (sqrt, inv_sqrt) = sqrtm_spd(base.matrix());
    let inner = inv_sqrt.matmul(&tangent.symmetrize()).matmul(&inv_sqrt);
    let e = expm_sym(&inner.symmetrize());
    let out = sqrt.matmul(&e).matmul(&sqrt).symmetrize();
    Ok(SpdPoint::from_unchecked(out))
}

/// Logarithmic map `Log_Σ(Λ) = Σ^{1/2} log(Σ^{-1/2} Λ Σ^{-1/2}) Σ^{1/2}`.
pub fn spd_log(base: &SpdPoint, target: &SpdPoint) -> Result<Tensor> {
    let (sqrt, inv_sqrt) = sqrtm_spd(base.matrix());
    let inner = inv_sqrt.matmul(target.matrix()).matmul(&inv_sqrt);
    let l = spd_logm(&inner.symmetrize())?;
    Ok(sqrt.matmul(&l).matmul(&sqrt).symmetrize())
}

/// Geodesic distance `‖log(Σ^{-1/2} Λ Σ^{-1/2})‖_F`.
pub fn spd_dist(a: &SpdPoint, b: &SpdPoint) -> Result<f64> {
    let (_, inv_sqrt) = sqrtm_spd(a.matrix());
    let inner = inv_sqrt.matmul(b.matrix()).matmul(&inv_sqrt);
    Ok(spd_logm(&inner.symmetrize())?.norm())
}

/// Parallel transport `T ↦ A T Aᵀ` with `A = Λ^{1/2} Σ^{-1/2}`.
pub fn spd_transport(from: &SpdPoint, to: &SpdPoint, tangent: &Tensor) -> Result<Tensor> {
    let asym = tangent.asymmetry();
    if asym > 1e-8 {
        return Err(Error::NotSymmetric { op: "spd_transport", asymmetry: asym, tol: 1e-8 });
    }
    let (to_sqrt, _) = sqrtm_spd(to.matrix());
    let (_, from_inv_sqrt) = sqrtm_spd(from.matrix());
    let a = to_sqrt.matmul(&from_inv_sqrt);
    Ok(a.matmul(&tangent.symmetrize()).matmul(&a.transpose()).symmetrize())
}

/// A weight pair `(Φ, Ψ)` of `n×d` matrices with `ΨᵀΦ = I_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiorthPoint {
    phi: Tensor,
    psi: Tensor,
}

impl BiorthPoint {
    pub fn new(phi: Tensor, psi: Tensor) -> Result<Self> {
        assert_eq!(phi.rank(), 2, "BiorthPoint: Φ must be a matrix");
        assert_eq!(phi.shape(), psi.shape(), "BiorthPoint: Φ and Ψ shapes differ");
        let (n, d) = (phi.rows(), phi.cols());
        if n < d || d < 1 {
            return Err(Error::InvalidArgument(format!(
                "biorthogonal pair needs n ≥ d ≥ 1, got {n}×{d}"
            )));
        }
        let resid = psi.transpose().matmul(&phi).sub(&Tensor::eye(d)).norm();
        if resid > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "biorthogonality violated: ‖ΨᵀΦ − I‖ = {resid:.3e}"
            )));
        }
        Ok(BiorthPoint { phi, psi })
    }

    pub fn from_unchecked(phi: Tensor, psi: Tensor) -> Self {
        BiorthPoint { phi, psi }
    }

    pub fn phi(&self) -> &Tensor {
        &self.phi
    }

    pub fn psi(&self) -> &Tensor {
        &self.psi
    }

    pub fn rows(&self) -> usize {
        self.phi.rows()
    }

    pub fn cols(&self) -> usize {
        self.phi.cols()
    }

    /// `‖ΨᵀΦ − I‖_F`, the constraint residual.
    pub fn constraint_residual(&self) -> f64 {
        let d = self.cols();
        self.psi.transpose().matmul(&self.phi).sub(&Tensor::eye(d)).norm()
    }
}

/// Tangent pair `(V, W)` at a biorthogonal point: `WᵀΦ + ΨᵀV = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiorthTangent {
    pub v: Tensor,
    pub w: Tensor,
}

impl BiorthTangent {
    pub fn zeros(n: usize, d: usize) -> Self {
        BiorthTangent { v: Tensor::zeros(&[n, d]), w: Tensor::zeros(&[n, d]) }
    }

    pub fn scale(&self, c: f64) -> Self {
        BiorthTangent { v: self.v.scale(c), w: self.w.scale(c) }
    }

    pub fn add(&self, other: &Self) -> Self {
        BiorthTangent { v: self.v.add(&other.v), w: self.w.add(&other.w) }
    }

    pub fn norm_sq(&self) -> f64 {
        self.v.norm_sq() + self.w.norm_sq()
    }

    /// `‖WᵀΦ + ΨᵀV‖_F` at the given base point.
    pub fn condition_residual(&self, base: &BiorthPoint) -> f64 {
        self.w
            .transpose()
            .matmul(base.phi())
            .add(&base.psi().transpose().matmul(&self.v))
            .norm()
    }
}

/// Project an arbitrary pair `(X, Y)` onto the tangent space at `base`.
///
/// The projection is `(X − ΨA, Y − ΦAᵀ)` with `A` solving the Sylvester
/// equation `A(ΦᵀΦ) + (ΨᵀΨ)A = YᵀΦ + ΨᵀX`; idempotent on tangent pairs.
pub fn bio_project(base: &BiorthPoint, x: &Tensor, y: &Tensor) -> Result<BiorthTangent> {
    assert_eq!(x.shape(), base.phi().shape(), "bio_project: X shape");
    assert_eq!(y.shape(), base.psi().shape(), "bio_project: Y shape");
    let g = base.phi().transpose().matmul(base.phi());
    let h = base.psi().transpose().matmul(base.psi());
    let r = y.transpose().matmul(base.phi()).add(&base.psi().transpose().matmul(x));
    let a = solve_sylvester(&g, &h, &r)?;
    Ok(BiorthTangent {
        v: x.sub(&base.psi().matmul(&a)),
        w: y.sub(&base.phi().matmul(&a.transpose())),
    })
}

/// First-order retraction
/// `R(V, W) = ((Φ+V)((Ψ+W)ᵀ(Φ+V))⁻¹, Ψ+W)`.
///
/// The result satisfies biorthogonality up to the accuracy of the inverse;
/// the zero tangent returns the base point unchanged.
pub fn bio_retract(base: &BiorthPoint, tangent: &BiorthTangent) -> Result<BiorthPoint> {
    let phi_v = base.phi().add(&tangent.v);
    let psi_w = base.psi().add(&tangent.w);
    let norml = psi_w.transpose().matmul(&phi_v);
    let inv = inv_square(&norml).map_err(|_| Error::IllConditioned {
        op: "bio_retract",
        cond: f64::INFINITY,
    })?;
    Ok(BiorthPoint::from_unchecked(phi_v.matmul(&inv), psi_w))
}

/// Vector transport: project the carried tangent onto the tangent space at
/// the destination (the first-order transport paired with the retraction).
pub fn bio_transport(
    _from: &BiorthPoint,
    to: &BiorthPoint,
    tangent: &BiorthTangent,
) -> Result<BiorthTangent> {
    bio_project(to, &tangent.v, &tangent.w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_spd(d: usize, rng: &mut impl Rng) -> SpdPoint {
        let a = Tensor::from_fn_matrix(d, d, |_, _| rng.gen_range(-1.0..1.0));
        SpdPoint::new(a.transpose().matmul(&a).add(&Tensor::eye(d).scale(0.7))).unwrap()
    }

    fn random_sym(d: usize, scale: f64, rng: &mut impl Rng) -> Tensor {
        Tensor::from_fn_matrix(d, d, |_, _| rng.gen_range(-1.0..1.0))
            .symmetrize()
            .scale(scale)
    }

    fn random_biorth(n: usize, d: usize, rng: &mut impl Rng) -> BiorthPoint {
        // random full-rank pair normalized so ΨᵀΦ = I
        loop {
            let phi = Tensor::from_fn_matrix(n, d, |_, _| rng.gen_range(-1.0..1.0));
            let psi0 = Tensor::from_fn_matrix(n, d, |_, _| rng.gen_range(-1.0..1.0));
            let m = psi0.transpose().matmul(&phi);
            if let Ok(minv) = inv_square(&m) {
                if minv.norm() < 1e3 {
                    let psi = psi0.matmul(&minv.transpose());
                    return BiorthPoint::new(phi, psi).unwrap();
                }
            }
        }
    }

    #[test]
    fn spd_exp_identity_base() {
        let base = SpdPoint::identity(3);
        assert_eq!(spd_exp(&base, &Tensor::zeros(&[3, 3])).unwrap().matrix(), &Tensor::eye(3));
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let s = random_sym(3, 1.0, &mut rng);
        // at the identity the map collapses to the plain matrix exponential
        let e = spd_exp(&base, &s).unwrap();
        assert!(e.matrix().sub(&expm_sym(&s)).norm() < 1e-12);
    }

    #[test]
    fn spd_exp_log_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..100 {
            let base = random_spd(3, &mut rng);
            let mut t = random_sym(3, 1.0, &mut rng);
            let norm = t.norm();
            if norm > 5.0 {
                t = t.scale(5.0 / norm);
            }
            let target = spd_exp(&base, &t).unwrap();
            let back = spd_log(&base, &target).unwrap();
            assert!(back.sub(&t).norm() < 1e-8, "roundtrip error {}", back.sub(&t).norm());
        }
    }

    #[test]
    fn spd_dist_diagonal_cases() {
        let base = SpdPoint::identity(2);
        let mut target = Tensor::eye(2);
        target.set2(0, 0, std::f64::consts::E.powi(2));
        let target = SpdPoint::new(target).unwrap();
        assert!((spd_dist(&base, &target).unwrap() - 2.0).abs() < 1e-12);

        // dist(I, aI) = √n·|log a| with n = 2, a = e²
        let a = std::f64::consts::E.powi(2);
        let scaled = SpdPoint::new(Tensor::eye(2).scale(a)).unwrap();
        let expect = (2.0f64).sqrt() * 2.0;
        assert!((spd_dist(&base, &scaled).unwrap() - expect).abs() < 1e-12);
        assert!(spd_dist(&base, &base).unwrap() < 1e-12);
    }

    #[test]
    fn spd_affine_invariance_of_distance() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_spd(3, &mut rng);
            let b = random_spd(3, &mut rng);
            let w = Tensor::from_fn_matrix(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            if inv_square(&w).is_err() {
                continue;
            }
            let congr = |p: &SpdPoint| {
                SpdPoint::new(w.transpose().matmul(p.matrix()).matmul(&w)).unwrap()
            };
            let d0 = spd_dist(&a, &b).unwrap();
            let d1 = spd_dist(&congr(&a), &congr(&b)).unwrap();
            assert!((d0 - d1).abs() < 1e-8, "{d0} vs {d1}");
        }
    }

    #[test]
    fn spd_transport_preserves_inner_product() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);

        // worked example: I → 4I with T = I in dimension 2
        let from = SpdPoint::identity(2);
        let to = SpdPoint::new(Tensor::eye(2).scale(4.0)).unwrap();
        let t = Tensor::eye(2);
        let moved = spd_transport(&from, &to, &t).unwrap();
        assert!(moved.sub(&Tensor::eye(2).scale(4.0)).norm() < 1e-12);
        let before = spd_inner(&from, &t, &t);
        let after = spd_inner(&to, &moved, &moved);
        assert!((before - 2.0).abs() < 1e-12);
        assert!((before - after).abs() < 1e-12);

        // identity transport
        let same = spd_transport(&from, &from, &t).unwrap();
        assert!(same.sub(&t).norm() < 1e-12);

        for _ in 0..20 {
            let a = random_spd(3, &mut rng);
            let b = random_spd(3, &mut rng);
            let t1 = random_sym(3, 1.0, &mut rng);
            let t2 = random_sym(3, 1.0, &mut rng);
            let m1 = spd_transport(&a, &b, &t1).unwrap();
            let m2 = spd_transport(&a, &b, &t2).unwrap();
            let before = spd_inner(&a, &t1, &t2);
            let after = spd_inner(&b, &m1, &m2);
            assert!((before - after).abs() < 1e-8, "{before} vs {after}");
        }
    }

    #[test]
    fn bio_project_hand_example() {
        // n = 2, d = 1, Φ = Ψ = (1,0)ᵀ, X = (1,0)ᵀ, Y = 0: A = 0.5
        let e1 = Tensor::matrix(2, 1, vec![1.0, 0.0]);
        let base = BiorthPoint::new(e1.clone(), e1.clone()).unwrap();
        let t = bio_project(&base, &e1, &Tensor::zeros(&[2, 1])).unwrap();
        assert!(t.v.sub(&Tensor::matrix(2, 1, vec![0.5, 0.0])).norm() < 1e-14);
        assert!(t.w.sub(&Tensor::matrix(2, 1, vec![-0.5, 0.0])).norm() < 1e-14);
        assert!(t.condition_residual(&base) < 1e-14);
    }

    #[test]
    fn bio_project_idempotent_and_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..20 {
            let base = random_biorth(5, 2, &mut rng);
            let x = Tensor::from_fn_matrix(5, 2, |_, _| rng.gen_range(-1.0..1.0));
            let y = Tensor::from_fn_matrix(5, 2, |_, _| rng.gen_range(-1.0..1.0));
            let t = bio_project(&base, &x, &y).unwrap();
            assert!(t.condition_residual(&base) < 1e-8);
            let again = bio_project(&base, &t.v, &t.w).unwrap();
            assert!(again.v.sub(&t.v).norm() < 1e-10);
            assert!(again.w.sub(&t.w).norm() < 1e-10);
        }
        let base = random_biorth(4, 2, &mut rng);
        let z = bio_project(&base, &Tensor::zeros(&[4, 2]), &Tensor::zeros(&[4, 2])).unwrap();
        assert!(z.norm_sq() == 0.0);
    }

    #[test]
    fn bio_retract_constraint_and_zero_tangent() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let base = random_biorth(6, 2, &mut rng);
        let zero = BiorthTangent::zeros(6, 2);
        let same = bio_retract(&base, &zero).unwrap();
        assert!(same.phi().sub(base.phi()).norm() < 1e-12);
        assert!(same.psi().sub(base.psi()).norm() < 1e-12);

        for _ in 0..20 {
            let x = Tensor::from_fn_matrix(6, 2, |_, _| rng.gen_range(-0.5..0.5));
            let y = Tensor::from_fn_matrix(6, 2, |_, _| rng.gen_range(-0.5..0.5));
            let t = bio_project(&base, &x, &y).unwrap();
            let new = bio_retract(&base, &t).unwrap();
            assert!(new.constraint_residual() < 1e-12, "residual {}", new.constraint_residual());
        }
    }

    #[test]
    fn bio_retract_first_order_accuracy() {
        // ‖R(tξ) − (base + tξ)‖ = O(t²): halving t quarters the defect
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let base = random_biorth(6, 2, &mut rng);
        let x = Tensor::from_fn_matrix(6, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y = Tensor::from_fn_matrix(6, 2, |_, _| rng.gen_range(-1.0..1.0));
        let xi = bio_project(&base, &x, &y).unwrap();
        let defect = |t: f64| {
            let r = bio_retract(&base, &xi.scale(t)).unwrap();
            let dphi = r.phi().sub(&base.phi().add(&xi.v.scale(t))).norm_sq();
            let dpsi = r.psi().sub(&base.psi().add(&xi.w.scale(t))).norm_sq();
            (dphi + dpsi).sqrt()
        };
        let d1 = defect(1e-2);
        let d2 = defect(5e-3);
        let ratio = d1 / d2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}, defects {d1} {d2}");
    }

    #[test]
    fn bio_transport_lands_in_tangent_space() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let from = random_biorth(5, 2, &mut rng);
        let to = random_biorth(5, 2, &mut rng);
        let x = Tensor::from_fn_matrix(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y = Tensor::from_fn_matrix(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let xi = bio_project(&from, &x, &y).unwrap();

        let moved = bio_transport(&from, &to, &xi).unwrap();
        assert!(moved.condition_residual(&to) < 1e-8);

        // same-point transport keeps the tangent
        let same = bio_transport(&from, &from, &xi).unwrap();
        assert!(same.v.sub(&xi.v).norm() < 1e-10);
        assert!(same.w.sub(&xi.w).norm() < 1e-10);

        // zero stays zero
        let z = bio_transport(&from, &to, &BiorthTangent::zeros(5, 2)).unwrap();
        assert!(z.norm_sq() == 0.0);
    }
}
