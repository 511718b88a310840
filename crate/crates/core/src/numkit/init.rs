//! Parameter initializers.
//!
//! Fan conventions follow the usual weight layout `[out, in, k, k]`:
//! `fan_in = in·k²` and `fan_out = out·k²`; a plain matrix `[rows, cols]`
//! has `fan_in = cols`, `fan_out = rows`.
//!
//! | kind            | distribution                                  |
//! |-----------------|-----------------------------------------------|
//! | XavierUniform   | U(−b, b), b = √(6 / (fan_in + fan_out))       |
//! | XavierNormal    | N(0, 2 / (fan_in + fan_out))                  |
//! | KaimingUniform  | U(−b, b), b = √(6 / fan_in)  (gain √2)        |
//! | KaimingNormal   | N(0, 2 / fan_in)                              |
//! | TorchDefault    | U(−b, b), b = √(1 / fan_in)                   |
//! | Orthogonal      | Q from the QR of a Gaussian matrix, sign-fixed |
//!
//! `TorchDefault` is what PyTorch layers start from: Kaiming-uniform with
//! leaky-ReLU slope √5, so variance 1/(3·fan_in) rather than 2/fan_in.
//!
//! Orthogonal matrices have orthonormal rows when `rows ≤ cols` and
//! orthonormal columns otherwise.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::rng::Rng;
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{config_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Initializer {
    XavierUniform,
    XavierNormal,
    KaimingUniform,
    KaimingNormal,
    Orthogonal,
    TorchDefault,
}

pub fn fans(shape: &[usize]) -> (usize, usize) {
    let receptive: usize = shape.iter().skip(2).product();
    let fan_in = shape.get(1).copied().unwrap_or(1) * receptive;
    let fan_out = shape[0] * receptive;
    (fan_in, fan_out)
}

/// Initializes a tensor of arbitrary weight shape. Pure in (kind, shape, rng state).
pub fn init_tensor<T: Scalar>(init: Initializer, shape: &[usize], rng: &mut Rng) -> Result<Tensor<T>> {
    let n: usize = shape.iter().product();
    let (fan_in, fan_out) = fans(shape);
    let data: Vec<f64> = match init {
        Initializer::XavierUniform => {
            let b = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.uniform(-b, b)).collect()
        }
        Initializer::XavierNormal => {
            let s = (2.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| s * rng.normal()).collect()
        }
        Initializer::KaimingUniform => {
            let b = (6.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.uniform(-b, b)).collect()
        }
        Initializer::KaimingNormal => {
            let s = (2.0 / fan_in as f64).sqrt();
            (0..n).map(|_| s * rng.normal()).collect()
        }
        Initializer::Orthogonal => orthogonal(shape[0], n / shape[0], rng),
        Initializer::TorchDefault => {
            let b = (1.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.uniform(-b, b)).collect()
        }
    };
    Tensor::from_vec(shape, data.into_iter().map(T::of).collect())
}

pub fn init_matrix<T: Scalar>(init: Initializer, rows: usize, cols: usize, rng: &mut Rng) -> Result<Tensor<T>> {
    if rows == 0 || cols == 0 {
        return Err(config_err!("init_matrix needs rows, cols ≥ 1 (got {rows}×{cols})"));
    }
    init_tensor(init, &[rows, cols], rng)
}

fn orthogonal(rows: usize, cols: usize, rng: &mut Rng) -> Vec<f64> {
    let (tall_r, tall_c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let g = DMatrix::<f64>::from_fn(tall_r, tall_c, |_, _| rng.normal());
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // make the decomposition unique: non-negative diagonal of R
    for j in 0..tall_c {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(if rows >= cols { q[(i, j)] } else { q[(j, i)] });
        }
    }
    out
}

impl Initializer {
    pub fn name(self) -> &'static str {
        match self {
            Initializer::XavierUniform => "xavier-uniform",
            Initializer::XavierNormal => "xavier-normal",
            Initializer::KaimingUniform => "kaiming-uniform",
            Initializer::KaimingNormal => "kaiming-normal",
            Initializer::Orthogonal => "orthogonal",
            Initializer::TorchDefault => "torch-default",
        }
    }
}

impl fmt::Display for Initializer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Initializer {
    type Err = Error;

    fn from_str(s: &str) -> std::result::Result<Self, Error> {
        Ok(match s.trim() {
            "xavier-uniform" | "xav-unif" => Initializer::XavierUniform,
            "xavier-normal" | "xav-norm" => Initializer::XavierNormal,
            "kaiming-uniform" | "ka-unif" => Initializer::KaimingUniform,
            "kaiming-normal" | "ka-norm" => Initializer::KaimingNormal,
            "orthogonal" | "orthog" => Initializer::Orthogonal,
            "torch-default" | "torch" => Initializer::TorchDefault,
            other => return Err(config_err!("unknown initializer {other:?}")),
        })
    }
}

/// ‖W Wᵀ − I‖∞ over the smaller dimension (W Wᵀ for wide, Wᵀ W for tall).
pub fn orthogonality_residual<T: Scalar>(w: &Tensor<T>) -> f64 {
    let (r, c) = w.matrix_dims();
    let d = w.data();
    let (n, inner) = if r <= c { (r, c) } else { (c, r) };
    let at = |i: usize, k: usize| if r <= c { d[i * c + k].f64() } else { d[k * c + i].f64() };
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let s: f64 = (0..inner).map(|k| at(i, k) * at(j, k)).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((s - target).abs());
        }
    }
    worst
}
