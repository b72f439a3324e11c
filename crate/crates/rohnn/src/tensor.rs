//! Dense row-major tensors of 64-bit floats.
//!
//! A [`Tensor`] is an immutable value: every operation returns a fresh tensor
//! and never aliases its inputs, so tensors can be copied freely between
//! threads. Rank 0 is a scalar, rank 1 a vector, rank 2 a matrix; nothing in
//! the library needs more.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let len: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            len,
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor { shape, data }
    }

    pub fn scalar(x: f64) -> Self {
        Tensor { shape: vec![], data: vec![x] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn ones(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![1.0; len] }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_fn_matrix(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Tensor::matrix(rows, cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// Value of a rank-0 tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on non-scalar of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        assert_eq!(self.rank(), 2, "rows() on rank-{} tensor", self.rank());
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.rank(), 2, "cols() on rank-{} tensor", self.rank());
        self.shape[1]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        let cols = self.shape[1];
        self.data[i * cols + j] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }

    fn zip(&self, other: &Tensor, op: &str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(
            self.shape, other.shape,
            "{op}: shape {:?} vs {:?}",
            self.shape, other.shape
        );
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        self.zip(other, "div", |a, b| a / b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| f(*x)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| c * x)
    }

    pub fn neg(&self) -> Tensor {
        self.map(|x| -x)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "dot: shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Frobenius norm (Euclidean norm for vectors).
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rank(), 2, "matmul: lhs rank {}", self.rank());
        assert_eq!(other.rank(), 2, "matmul: rhs rank {}", other.rank());
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[l * n..(l + 1) * n];
                let o = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    o[j] += a * row[j];
                }
            }
        }
        Tensor::matrix(m, n, out)
    }

    pub fn matvec(&self, v: &Tensor) -> Tensor {
        assert_eq!(self.rank(), 2, "matvec: lhs rank {}", self.rank());
        assert_eq!(v.rank(), 1, "matvec: rhs rank {}", v.rank());
        let (m, k) = (self.shape[0], self.shape[1]);
        assert_eq!(k, v.shape[0], "matvec: dims {k} vs {}", v.shape[0]);
        let mut out = vec![0.0; m];
        for i in 0..m {
            out[i] = self.data[i * k..(i + 1) * k]
                .iter()
                .zip(&v.data)
                .map(|(a, b)| a * b)
                .sum();
        }
        Tensor::vector(out)
    }

    pub fn transpose(&self) -> Tensor {
        assert_eq!(self.rank(), 2, "transpose: rank {}", self.rank());
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::matrix(n, m, out)
    }

    /// Outer product of two vectors: `u vᵀ`.
    pub fn outer(u: &Tensor, v: &Tensor) -> Tensor {
        assert_eq!(u.rank(), 1, "outer: lhs rank");
        assert_eq!(v.rank(), 1, "outer: rhs rank");
        let (m, n) = (u.shape[0], v.shape[0]);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(u.data[i] * v.data[j]);
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// `‖A − Aᵀ‖_F` for a square matrix.
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.rank(), 2);
        assert_eq!(self.shape[0], self.shape[1]);
        let n = self.shape[0];
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = self.get2(i, j) - self.get2(j, i);
                s += d * d;
            }
        }
        s.sqrt()
    }

    /// Symmetric part `(A + Aᵀ)/2`.
    pub fn symmetrize(&self) -> Tensor {
        let n = self.shape[0];
        Tensor::from_fn_matrix(n, n, |i, j| 0.5 * (self.get2(i, j) + self.get2(j, i)))
    }

    /// Extract a contiguous slice of a vector.
    pub fn slice_vec(&self, start: usize, len: usize) -> Tensor {
        assert_eq!(self.rank(), 1, "slice_vec on rank-{}", self.rank());
        assert!(start + len <= self.shape[0]);
        Tensor::vector(self.data[start..start + len].to_vec())
    }

    /// Concatenate vectors.
    pub fn concat(parts: &[&Tensor]) -> Tensor {
        let mut data = Vec::new();
        for p in parts {
            assert_eq!(p.rank(), 1, "concat expects vectors");
            data.extend_from_slice(&p.data);
        }
        Tensor::vector(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matvec_agree() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = Tensor::vector(vec![1.0, 0.0, -1.0]);
        let mv = a.matvec(&v);
        assert_eq!(mv.data(), &[-2.0, -2.0]);
        let vm = a.matmul(&Tensor::matrix(3, 1, vec![1.0, 0.0, -1.0]));
        assert_eq!(vm.data(), mv.data());
    }

    #[test]
    fn transpose_involution() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    #[should_panic]
    fn shape_mismatch_panics() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![1.0]);
        let _ = a.add(&b);
    }
}
