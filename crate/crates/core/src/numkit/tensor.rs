//! Dense row-major tensors of rank ≤ 4.
//!
//! Matrix-shaped operations view a tensor as `shape[0] × (product of the
//! remaining extents)`, which is how a batch of samples `[B, ...features]`
//! is multiplied against a weight matrix without an explicit flatten.

use super::ledger::{charge, FlopLedger};
use super::scalar::Scalar;
use crate::error::{dim_err, Error, Result};

pub const MAX_RANK: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Whether a GEMM operand is used as stored or transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(dim_err!("rank must be 1..={MAX_RANK}, got shape {shape:?}"));
    }
    if shape.contains(&0) {
        return Err(dim_err!("extents must be positive, got {shape:?}"));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(dim_err!("shape {shape:?} holds {n} values, got {}", data.len()));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn filled(shape: &[usize], value: T) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self { shape: shape.to_vec(), data: vec![value; n] })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, T::zero())
    }

    /// Zeros with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Self { shape: self.shape.clone(), data: vec![T::zero(); self.data.len()] }
    }

    pub fn eye(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        Ok(t)
    }

    /// Builds a matrix from nested rows given as f64 literals.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(dim_err!("ragged rows"));
        }
        let data = rows.iter().flat_map(|row| row.iter().map(|&v| T::of(v))).collect();
        Self::from_vec(&[r, c], data)
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// `(rows, cols)` of the matrix view.
    pub fn matrix_dims(&self) -> (usize, usize) {
        let rows = self.shape[0];
        (rows, self.data.len() / rows)
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(dim_err!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn at(&self, index: &[usize]) -> T {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, (&ix, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < d, "index {index:?} out of bounds for axis {i} of {:?}", self.shape);
            off = off * d + ix;
        }
        self.data[off]
    }

    /// Row `i` of the matrix view.
    pub fn row(&self, i: usize) -> &[T] {
        let (_, c) = self.matrix_dims();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let (_, c) = self.matrix_dims();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn map_inplace(&mut self, f: impl Fn(T) -> T) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    fn same_len(&self, other: &Self, what: &str) -> Result<()> {
        if self.data.len() != other.data.len() {
            return Err(dim_err!("{what}: {:?} vs {:?}", self.shape, other.shape));
        }
        Ok(())
    }

    /// Element-wise combination; shapes may differ as long as the element
    /// counts agree (the result takes `self`'s shape).
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_len(other, "zip_map")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// `self ← self + alpha·x`.
    pub fn axpy(&mut self, alpha: T, x: &Self) -> Result<()> {
        self.same_len(x, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&x.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.same_len(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    /// Euclidean (Frobenius) norm of all entries.
    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Transpose of the matrix view.
    pub fn transpose(&self) -> Self {
        let (r, c) = self.matrix_dims();
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Self { shape: vec![c, r], data }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| U::of(v.f64())).collect() }
    }
}

/// Dense product of matrix views, `op_a(a) · op_b(b)`, charging m·k·n MACs.
pub fn gemm<T: Scalar>(a: &Tensor<T>, op_a: Op, b: &Tensor<T>, op_b: Op, ledger: Option<&FlopLedger>) -> Result<Tensor<T>> {
    let (ar, ac) = a.matrix_dims();
    let (br, bc) = b.matrix_dims();
    let (m, k) = if op_a == Op::N { (ar, ac) } else { (ac, ar) };
    let (k2, n) = if op_b == Op::N { (br, bc) } else { (bc, br) };
    if k != k2 {
        return Err(dim_err!("matmul inner extents differ: {:?}{} · {:?}{}", a.shape, tag(op_a), b.shape, tag(op_b)));
    }
    let mut out = vec![T::zero(); m * n];
    gemm_slices(m, k, n, a.data(), ac, op_a, b.data(), bc, op_b, &mut out, false);
    charge(ledger, (m * k * n) as u64);
    Tensor::from_vec(&[m, n], out)
}

fn tag(op: Op) -> &'static str {
    if op == Op::T {
        "ᵀ"
    } else {
        ""
    }
}

/// Plain `a · b` for matrix views.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    gemm(a, Op::N, b, Op::N, None)
}

/// GEMM over raw row-major slices. `lda`/`ldb` are the stored row lengths of
/// `a` and `b`. With `accumulate` the product is added into `c`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_slices<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    lda: usize,
    op_a: Op,
    b: &[T],
    ldb: usize,
    op_b: Op,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(c.len() >= m * n);
    let (rsa, csa) = if op_a == Op::N { (lda as isize, 1) } else { (1, lda as isize) };
    let (rsb, csb) = if op_b == Op::N { (ldb as isize, 1) } else { (1, ldb as isize) };
    // extents of the stored operands must cover the strided access
    let a_need = if m == 0 || k == 0 { 0 } else { ((m - 1) as isize * rsa + (k - 1) as isize * csa) as usize + 1 };
    let b_need = if k == 0 || n == 0 { 0 } else { ((k - 1) as isize * rsb + (n - 1) as isize * csb) as usize + 1 };
    assert!(a.len() >= a_need && b.len() >= b_need, "gemm operand too short");
    let beta = if accumulate { T::one() } else { T::zero() };
    unsafe {
        T::gemm_raw(m, k, n, T::one(), a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

impl<T: Scalar> TryFrom<Vec<T>> for Tensor<T> {
    type Error = Error;

    fn try_from(v: Vec<T>) -> Result<Self> {
        let n = v.len();
        Tensor::from_vec(&[n], v)
    }
}
