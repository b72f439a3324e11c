//! Numerical linear-algebra kernels (optimizer-side, non-differentiable).
//!
//! Everything here runs outside the computation graph: eigendecompositions,
//! matrix square roots and logarithms, Sylvester and dense solves, SVD. No
//! gradient flows through these routines; the differentiable counterparts
//! (e.g. [`crate::graph::sym_expm`]) are built from graph primitives instead.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn to_na(t: &Tensor) -> DMatrix<f64> {
    assert_eq!(t.rank(), 2, "to_na expects a matrix");
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

pub fn from_na(m: &DMatrix<f64>) -> Tensor {
    Tensor::from_fn_matrix(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
///
/// Returns `(Q, λ)` with `Q` holding eigenvectors as columns. The input is
/// symmetrized first; deterministic for a given input.
pub fn eigh(t: &Tensor) -> (Tensor, Vec<f64>) {
    let sym = t.symmetrize();
    let m = to_na(&sym);
    let se = m.symmetric_eigen();
    let n = sym.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let q = Tensor::from_fn_matrix(n, n, |i, j| se.eigenvectors[(i, order[j])]);
    (q, vals)
}

/// `Q f(Λ) Qᵀ` for a symmetric matrix.
fn sym_fun(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let (q, vals) = eigh(t);
    let n = t.rows();
    let mut scaled = q.clone();
    for j in 0..n {
        let fj = f(vals[j]);
        for i in 0..n {
            let v = scaled.get2(i, j) * fj;
            scaled.set2(i, j, v);
        }
    }
    scaled.matmul(&q.transpose()).symmetrize()
}

/// Matrix exponential of a symmetric matrix via its spectrum.
pub fn expm_sym(t: &Tensor) -> Tensor {
    sym_fun(t, f64::exp)
}

/// Principal matrix logarithm of a symmetric positive-definite matrix.
///
/// Errors if the minimum eigenvalue is at or below 1e-12.
pub fn spd_logm(p: &Tensor) -> Result<Tensor> {
    let asym = p.asymmetry();
    if asym > 1e-8 {
        return Err(Error::NotSymmetric {
            op: "spd_logm",
            asymmetry: asym,
            tol: 1e-8,
        });
    }
    let (q, vals) = eigh(p);
    let min = vals[0];
    if min <= 1e-12 {
        return Err(Error::NotSpd { op: "spd_logm", min_eig: min });
    }
    let n = p.rows();
    let mut scaled = q.clone();
    for j in 0..n {
        let fj = vals[j].ln();
        for i in 0..n {
            let v = scaled.get2(i, j) * fj;
            scaled.set2(i, j, v);
        }
    }
    Ok(scaled.matmul(&q.transpose()).symmetrize())
}

/// Square root and inverse square root of an SPD matrix, eigenvalues clamped
/// at 1e-12 for degenerate-spectrum safety.
pub fn sqrtm_spd(p: &Tensor) -> (Tensor, Tensor) {
    let clamp = |x: f64| x.max(1e-12);
    let sqrt = sym_fun(p, |x| clamp(x).sqrt());
    let inv_sqrt = sym_fun(p, |x| 1.0 / clamp(x).sqrt());
    (sqrt, inv_sqrt)
}

pub fn min_eigenvalue(t: &Tensor) -> f64 {
    eigh(t).1[0]
}

pub fn is_spd(t: &Tensor, sym_tol: f64) -> bool {
    t.rank() == 2 && t.rows() == t.cols() && t.asymmetry() <= sym_tol && min_eigenvalue(t) > 0.0
}

/// Whether a Cholesky factorization of the (symmetrized) matrix succeeds.
pub fn cholesky_ok(t: &Tensor) -> bool {
    nalgebra::Cholesky::new(to_na(&t.symmetrize())).is_some()
}

/// Solve `A X = B` for square `A` by LU with partial pivoting.
pub fn solve_square(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let lu = to_na(a).lu();
    let bm = if b.rank() == 1 {
        DMatrix::from_column_slice(b.len(), 1, b.data())
    } else {
        to_na(b)
    };
    match lu.solve(&bm) {
        Some(x) => {
            if b.rank() == 1 {
                Ok(Tensor::vector(x.column(0).iter().copied().collect()))
            } else {
                Ok(from_na(&x))
            }
        }
        None => Err(Error::IllConditioned { op: "solve_square", cond: f64::INFINITY }),
    }
}

/// Inverse of a square matrix; errors on singularity.
pub fn inv_square(a: &Tensor) -> Result<Tensor> {
    match to_na(a).try_inverse() {
        Some(x) => Ok(from_na(&x)),
        None => Err(Error::IllConditioned { op: "inv_square", cond: f64::INFINITY }),
    }
}

/// Solve `A G + H A = R` for SPD `G` and `H`.
///
/// SPD coefficients make the spectra of `H` and `−G` disjoint, so the
/// solution is unique. Diagonalizing `G = U Λ Uᵀ` and `H = V M Vᵀ` turns the
/// equation into `Ã Λ + M Ã = R̃` with `Ã = Vᵀ A U`, solved entrywise by
/// `Ã_ij = R̃_ij / (λ_j + μ_i)`. Errors when the pencil is ill-conditioned
/// (condition estimate above 1e12).
pub fn solve_sylvester(g: &Tensor, h: &Tensor, r: &Tensor) -> Result<Tensor> {
    let d = r.rows();
    assert_eq!(g.shape(), &[d, d], "solve_sylvester: G shape");
    assert_eq!(h.shape(), &[d, d], "solve_sylvester: H shape");
    let (u, lam) = eigh(g);
    let (v, mu) = eigh(h);
    let denom_min = lam[0] + mu[0];
    let denom_max = lam[d - 1] + mu[d - 1];
    if denom_min <= 0.0 || denom_max / denom_min > 1e12 {
        return Err(Error::IllConditioned {
            op: "solve_sylvester",
            cond: if denom_min <= 0.0 { f64::INFINITY } else { denom_max / denom_min },
        });
    }
    let rt = v.transpose().matmul(r).matmul(&u);
    let mut at = Tensor::zeros(&[d, d]);
    for i in 0..d {
        for j in 0..d {
            at.set2(i, j, rt.get2(i, j) / (lam[j] + mu[i]));
        }
    }
    Ok(v.matmul(&at).matmul(&u.transpose()))
}

/// Thin SVD: `A = U diag(S) Vᵀ` with `U: m×k`, `k = min(m, n)`, singular
/// values sorted descending.
pub fn svd_thin(a: &Tensor) -> (Tensor, Vec<f64>, Tensor) {
    let svd = to_na(a).svd(true, true);
    let u = svd.u.expect("svd: U requested");
    let vt = svd.v_t.expect("svd: Vt requested");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    // nalgebra returns singular values in descending order already; enforce it
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let sv: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let um = Tensor::from_fn_matrix(u.nrows(), order.len(), |i, j| u[(i, order[j])]);
    let vtm = Tensor::from_fn_matrix(order.len(), vt.ncols(), |i, j| vt[(order[i], j)]);
    (um, sv, vtm)
}

/// Random orthogonal matrix from the Haar distribution: QR of a Gaussian
/// matrix with the sign convention `diag(R) > 0`.
pub fn haar_orthogonal(n: usize, rng: &mut impl Rng) -> Tensor {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    from_na(&q)
}

/// Canonical Poisson matrix `J` of size `2n×2n`: `[[0, I], [−I, 0]]`.
pub fn poisson_matrix(n: usize) -> Tensor {
    let mut j = Tensor::zeros(&[2 * n, 2 * n]);
    for i in 0..n {
        j.set2(i, n + i, 1.0);
        j.set2(n + i, i, -1.0);
    }
    j
}

pub fn to_na_vec(t: &Tensor) -> DVector<f64> {
    DVector::from_column_slice(t.data())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn random_spd(d: usize, rng: &mut impl Rng) -> Tensor {
        let a = Tensor::from_fn_matrix(d, d, |_, _| rng.gen_range(-1.0..1.0));
        let ata = a.transpose().matmul(&a);
        ata.add(&Tensor::eye(d).scale(0.5))
    }

    #[test]
    fn eigh_reconstructs() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let s = random_spd(5, &mut rng);
        let (q, vals) = eigh(&s);
        let mut lam = Tensor::zeros(&[5, 5]);
        for i in 0..5 {
            lam.set2(i, i, vals[i]);
        }
        let rec = q.matmul(&lam).matmul(&q.transpose());
        assert!(rec.sub(&s).norm() < 1e-12 * s.norm().max(1.0));
        for w in vals.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn spd_logm_identity_is_zero() {
        let l = spd_logm(&Tensor::eye(4)).unwrap();
        assert!(l.norm() < 1e-14);
    }

    #[test]
    fn spd_logm_diagonal() {
        // diag(e², 1) → diag(2, 0)
        let mut p = Tensor::zeros(&[2, 2]);
        p.set2(0, 0, std::f64::consts::E.powi(2));
        p.set2(1, 1, 1.0);
        let l = spd_logm(&p).unwrap();
        assert!((l.get2(0, 0) - 2.0).abs() < 1e-12);
        assert!(l.get2(1, 1).abs() < 1e-12);
    }

    #[test]
    fn spd_logm_rejects_indefinite() {
        let mut p = Tensor::eye(2);
        p.set2(1, 1, -1.0);
        assert!(spd_logm(&p).is_err());
    }

    #[test]
    fn logm_expm_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..10 {
            let p = random_spd(5, &mut rng);
            let l = spd_logm(&p).unwrap();
            let back = expm_sym(&l);
            assert!(back.sub(&p).norm() < 1e-9, "roundtrip error {}", back.sub(&p).norm());
        }
    }

    #[test]
    fn sylvester_identity_coefficients() {
        // G = H = I → A = R/2
        let r = Tensor::matrix(3, 3, (0..9).map(|k| k as f64 - 4.0).collect());
        let a = solve_sylvester(&Tensor::eye(3), &Tensor::eye(3), &r).unwrap();
        assert!(a.sub(&r.scale(0.5)).norm() < 1e-13);
    }

    #[test]
    fn sylvester_scalar_case() {
        let g = Tensor::matrix(1, 1, vec![2.0]);
        let h = Tensor::matrix(1, 1, vec![3.0]);
        let r = Tensor::matrix(1, 1, vec![10.0]);
        let a = solve_sylvester(&g, &h, &r).unwrap();
        assert!((a.get2(0, 0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sylvester_residual_bound() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..20 {
            let g = random_spd(4, &mut rng);
            let h = random_spd(4, &mut rng);
            let r = Tensor::from_fn_matrix(4, 4, |_, _| rng.gen_range(-2.0..2.0));
            let a = solve_sylvester(&g, &h, &r).unwrap();
            let resid = a.matmul(&g).add(&h.matmul(&a)).sub(&r);
            assert!(
                resid.norm() < 1e-10 * r.norm(),
                "residual {} vs bound {}",
                resid.norm(),
                1e-10 * r.norm()
            );
        }
    }

    #[test]
    fn haar_orthogonal_is_orthogonal() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let q = haar_orthogonal(6, &mut rng);
        let qtq = q.transpose().matmul(&q);
        assert!(qtq.sub(&Tensor::eye(6)).norm() < 1e-12);
    }

    #[test]
    fn svd_reconstructs() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let a = Tensor::from_fn_matrix(6, 4, |_, _| rng.gen_range(-1.0..1.0));
        let (u, s, vt) = svd_thin(&a);
        let mut ds = Tensor::zeros(&[4, 4]);
        for i in 0..4 {
            ds.set2(i, i, s[i]);
        }
        let rec = u.matmul(&ds).matmul(&vt);
        assert!(rec.sub(&a).norm() < 1e-12);
    }
}
