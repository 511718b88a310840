use nalgebra::DMatrix;

use super::errorprop::{record_error_prop, ErrorPropMatrix};
use crate::error::{config_err, Result};
use crate::learners::{Algorithm, InferenceState, LearnerConfig, SweepOrder};
use crate::netgraph::{build_mlp, BlockOp, Network};
use crate::numkit::{streams, Activation, Initializer, Rng, Scalar, Tensor};

/// Below this an error norm counts as not yet arrived.
pub const DELAY_ZERO_TOL: f64 = 1e-12;
/// Above this an error norm counts as arrived.
pub const DELAY_ARRIVE_TOL: f64 = 1e-9;

/// A random tanh MLP with `depth` blocks and widths in 3..=8, plus a small
/// batch and one-hot targets chosen to disagree with the current argmax.
pub fn theorem_fixture(seed: u64, depth: usize, batch: usize) -> Result<(Network<f64>, Tensor<f64>, Tensor<f64>)> {
    if depth == 0 || batch == 0 {
        return Err(config_err!("fixture needs positive depth and batch"));
    }
    let mut rng = Rng::seed(seed).fork(streams::PROBE);
    let d_in = 3 + rng.below(6);
    let hidden: Vec<usize> = (0..depth - 1).map(|_| 3 + rng.below(6)).collect();
    let classes = 2 + rng.below(4);
    let net = build_mlp(d_in, &hidden, classes, Activation::Tanh, Initializer::XavierNormal, &mut rng)?;
    let x = Tensor::from_vec(&[batch, d_in], (0..batch * d_in).map(|_| rng.normal()).collect())?;
    let out = net.predict(&x)?;
    let mut y = vec![0.0; batch * classes];
    for b in 0..batch {
        let row = out.row(b);
        let best = (0..classes).fold(0, |m, i| if row[i] > row[m] { i } else { m });
        let wrong = (best + 1 + rng.below(classes - 1)) % classes;
        y[b * classes + wrong] = 1.0;
    }
    Ok((net, x, Tensor::from_vec(&[batch, classes], y)?))
}

/// Forward-initialized PC with `L` sweeps; `pass` iff every layer is silent
/// before t = L − ℓ and active at it.
pub fn delay_check<T: Scalar>(net: &Network<T>, x: &Tensor<T>, y: &Tensor<T>, gamma: f64) -> Result<(ErrorPropMatrix, bool)> {
    let cfg = LearnerConfig::new(Algorithm::Pc, gamma, net.depth());
    let m = record_error_prop(net, x, y, &cfg, 0.0)?;
    let pass = m.shows_delay(DELAY_ZERO_TOL, DELAY_ARRIVE_TOL);
    Ok((m, pass))
}

/// First-arrival error of one layer for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayEntry {
    pub sample: usize,
    /// ℓ in 1..L.
    pub layer: usize,
    /// ‖ε_ℓ(L − ℓ)‖².
    pub measured: f64,
    /// γ^{2(L−ℓ)} Π_{k=ℓ}^{L−1} ‖J_k‖₂² ‖ε_L(0)‖².
    pub bound: f64,
}

impl DecayEntry {
    pub fn holds(&self) -> bool {
        // the bound is an upper bound in exact arithmetic; allow rounding
        self.measured <= self.bound * (1.0 + 1e-12) + f64::MIN_POSITIVE
    }
}

/// Spectral norm of the dense block Jacobian diag(f′(z)) Θ for one sample.
fn jacobian_norm<T: Scalar>(theta: &Tensor<T>, fprime: &[T]) -> f64 {
    let (rows, cols) = theta.matrix_dims();
    let j = DMatrix::from_fn(rows, cols, |i, k| fprime[i].f64() * theta.data()[i * cols + k].f64());
    j.singular_values().max()
}

fn sample<T: Scalar>(t: &Tensor<T>, b: usize) -> Result<Tensor<T>> {
    let mut shape = t.shape().to_vec();
    shape[0] = 1;
    Tensor::from_vec(&shape, t.row(b).to_vec())
}

/// Evaluates the exponential-decay bound per sample and hidden layer. Only
/// dense networks are supported since the bound needs explicit Jacobians.
pub fn decay_check<T: Scalar>(net: &Network<T>, x: &Tensor<T>, y: &Tensor<T>, gamma: f64) -> Result<Vec<DecayEntry>> {
    if net.blocks().iter().any(|b| !matches!(b.op, BlockOp::Dense { .. }) || b.pool.is_some()) {
        return Err(config_err!("decay bound is evaluated for dense networks only"));
    }
    let depth = net.depth();
    let mut out = Vec::new();
    for b in 0..x.shape()[0] {
        let (xb, yb) = (sample(x, b)?, sample(y, b)?);
        let mut state = InferenceState::forward_init(net, &xb, Some(&yb), None)?;
        // Jacobians at the forward-initialized activities
        let norms: Vec<f64> = (0..depth)
            .map(|k| {
                let spec = net.blocks()[k].activation;
                jacobian_norm(net.weight(k), spec.apply_deriv(&state.traces[k].z).data())
            })
            .collect();
        let out_err = state.eps[depth - 1].norm_sq().f64();
        let mut measured = vec![0.0; depth];
        for t in 1..depth {
            // layer ℓ = L − t first receives error at step t
            state.sweep(net, gamma, SweepOrder::Jacobi, None)?;
            measured[depth - t - 1] = state.eps[depth - t - 1].norm_sq().f64();
        }
        for layer in 1..depth {
            let hops = depth - layer;
            let chain: f64 = norms[layer..depth].iter().map(|n| n * n).product();
            out.push(DecayEntry {
                sample: b,
                layer,
                measured: measured[layer - 1],
                bound: gamma.powi(2 * hops as i32) * chain * out_err,
            });
        }
    }
    Ok(out)
}
