//! Checks that hold exactly for linear networks: the contraction of the
//! last-layer forward/feedback gap under the Kolen-Pollack rule, and the
//! closed form of the first DKP-PC activity update.

use std::io::Write;
use std::path::Path;

use super::report::csv_file;
use crate::error::{config_err, dim_err, Result};
use crate::learners::{dkp_step, dkppc_step, Algorithm, LearnerConfig, Phase1};
use crate::netgraph::{BlockOp, Network};
use crate::numkit::{Activation, Scalar, Tensor};
use crate::optim::{OptimConfig, Optimizer};

/// Ω = Θ_{L−1} − Ψ_{L−1}ᵀ, the gap between the output weights and the
/// feedback matrix of the last hidden layer.
pub fn omega<T: Scalar>(net: &Network<T>) -> Result<Tensor<T>> {
    let depth = net.depth();
    if depth < 2 {
        return Err(config_err!("omega needs at least one hidden layer"));
    }
    let psi = &net.require_feedback("omega")?[depth - 2];
    net.weight(depth - 1).sub(&psi.transpose())
}

/// ‖Ω(t)‖_F for t = 0..=steps.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaTrace {
    pub alpha: f64,
    pub norms: Vec<f64>,
}

impl OmegaTrace {
    /// ‖Ω(t+1)‖ / ‖Ω(t)‖, `None` where ‖Ω(t)‖ is zero.
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.norms.windows(2).map(|w| (w[0] > 0.0).then(|| w[1] / w[0])).collect()
    }

    /// Worst deviation from (1 − α)ᵗ‖Ω(0)‖: relative to that value where it
    /// is positive, relative to ‖Ω(0)‖ where it vanishes, absolute when Ω
    /// starts at zero.
    pub fn max_deviation(&self) -> f64 {
        let n0 = self.norms.first().copied().unwrap_or(0.0);
        self.norms
            .iter()
            .enumerate()
            .map(|(t, &n)| {
                let expected = (1.0 - self.alpha).powi(t as i32) * n0;
                if expected > 0.0 {
                    (n - expected).abs() / expected
                } else if n0 > 0.0 {
                    n / n0
                } else {
                    n
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn holds(&self, rtol: f64) -> bool {
        self.max_deviation() <= rtol
    }

    /// Rows `t,frobenius`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv_file(path, "t,frobenius")?;
        for (t, n) in self.norms.iter().enumerate() {
            writeln!(w, "{t},{n:e}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains a copy of `net` with DKP on one fixed batch for `steps` steps,
/// forward and feedback weights both moved by SGD in the decay form
/// θ ← θ − α(g + θ), and records ‖Ω‖_F after every step.
pub fn omega_decay_check<T: Scalar>(net: &Network<T>, x: &Tensor<T>, y: &Tensor<T>, alpha: f64, steps: usize) -> Result<OmegaTrace> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(config_err!("omega check needs α in (0, 1], got {alpha}"));
    }
    let mut net = net.clone();
    // the configured rate is a placeholder; every step passes α explicitly
    let cfg = OptimConfig::sgd(0.5).with_decay(1.0);
    let (mut fw, mut fb) = (Optimizer::new(cfg)?, Optimizer::new(cfg)?);
    let mut norms = vec![omega(&net)?.norm().f64()];
    for _ in 0..steps {
        let g = dkp_step(&net, x, y, None)?;
        g.apply_forward(&mut net, &mut fw, alpha)?;
        g.apply_feedback(&mut net, &mut fb, alpha)?;
        norms.push(omega(&net)?.norm().f64());
    }
    Ok(OmegaTrace { alpha, norms })
}

/// Simulated versus closed-form first activity update at one hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionReport {
    pub layer: usize,
    /// Per sample ‖Δφ̃_ℓ(simulated) − Δφ̃_ℓ(closed form)‖₂.
    pub residuals: Vec<f64>,
    /// Per sample ‖Δφ̃_ℓ(simulated)‖₂, for scale.
    pub update_norms: Vec<f64>,
}

impl DecompositionReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

fn mat_t_vec(m: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    (0..cols).map(|j| (0..rows).map(|i| m[i * cols + j] * v[i]).sum()).collect()
}

fn mat_vec(m: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    (0..rows).map(|i| (0..cols).map(|j| m[i * cols + j] * v[j]).sum()).collect()
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// For each sample on its own, runs DKP-PC with a raw phase-1 step α and
/// one inference sweep of size γ, and compares the change of φ_ℓ with
///
/// αγ(‖φ_ℓ‖² Θ_ℓᵀ δ̃_{ℓ+1} − ‖φ_{ℓ−1}‖² δ̃_ℓ) − α²γ ‖φ_ℓ‖² ‖δ̃_{ℓ+1}‖² φ_ℓ,
///
/// where δ̃_k = Ψ_k δ_L. Valid for bias-free dense identity networks and
/// layers 1 ≤ ℓ ≤ L − 2, whose errors vanish after forward initialization.
pub fn linear_decomposition_check<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    alpha: f64,
    gamma: f64,
    layer: usize,
) -> Result<DecompositionReport> {
    let depth = net.depth();
    if net.has_bias() || net.blocks().iter().any(|b| !matches!(b.op, BlockOp::Dense { .. }) || b.activation != Activation::Identity) {
        return Err(config_err!("decomposition needs a bias-free dense identity network"));
    }
    if !(1..=depth.saturating_sub(2)).contains(&layer) {
        return Err(config_err!("decomposition layer must lie in 1..={}, got {layer}", depth.saturating_sub(2)));
    }
    let psi = net.require_feedback("decomposition")?;
    let batch = x.shape()[0];
    if y.shape()[0] != batch {
        return Err(dim_err!("{batch} inputs but {} targets", y.shape()[0]));
    }
    let cfg = LearnerConfig::new(Algorithm::DkpPc, gamma, 1);
    let as_f64 = |t: &Tensor<T>| t.data().iter().map(|v| v.f64()).collect::<Vec<f64>>();
    let mut residuals = Vec::with_capacity(batch);
    let mut update_norms = Vec::with_capacity(batch);
    for b in 0..batch {
        let row = |t: &Tensor<T>| -> Result<Tensor<T>> {
            let mut shape = t.shape().to_vec();
            shape[0] = 1;
            Tensor::from_vec(&shape, t.row(b).to_vec())
        };
        let (xb, yb) = (row(x)?, row(y)?);
        let trace = net.forward(&xb, None)?;
        let mut copy = net.clone();
        let out = dkppc_step(&mut copy, &xb, &yb, &cfg, Phase1::Raw { alpha }, None)?;
        let simulated = out.state.phi[layer].sub(&trace.layers[layer - 1].x)?;

        let phi = as_f64(&trace.layers[layer - 1].x);
        let phi_prev = as_f64(trace.block_input(layer - 1));
        let delta_l: Vec<f64> = as_f64(trace.output()).iter().zip(as_f64(&yb)).map(|(o, t)| o - t).collect();
        let d_out = delta_l.len();
        let project = |k: usize| {
            // Ψ_k is stored at index k − 1 with shape [d_k, d_L]
            let p = as_f64(&psi[k - 1]);
            mat_vec(&p, p.len() / d_out, d_out, &delta_l)
        };
        let (dt_here, dt_next) = (project(layer), project(layer + 1));
        let theta = as_f64(net.weight(layer));
        let back = mat_t_vec(&theta, dt_next.len(), phi.len(), &dt_next);
        let (np, npp, nd) = (norm_sq(&phi), norm_sq(&phi_prev), norm_sq(&dt_next));
        let predicted: Vec<f64> = (0..phi.len())
            .map(|i| alpha * gamma * (np * back[i] - npp * dt_here[i]) - alpha * alpha * gamma * np * nd * phi[i])
            .collect();
        let sim = as_f64(&simulated);
        residuals.push(sim.iter().zip(&predicted).map(|(s, p)| (s - p) * (s - p)).sum::<f64>().sqrt());
        update_norms.push(norm_sq(&sim).sqrt());
    }
    Ok(DecompositionReport { layer, residuals, update_norms })
}
