use super::backprop::{direct_grads, output_error};
use super::pc::{pc_infer_from, InferenceState, InferenceTrace, IpcSession};
use super::{enter, GradientSet, LearnerConfig};
use crate::error::Result;
use crate::netgraph::Network;
use crate::numkit::{FlopLedger, Phase, Scalar, Tensor};
use crate::optim::Optimizer;

/// How the preliminary (phase-1) forward update is applied.
pub enum Phase1<'a, T> {
    /// Through the forward optimizer at the given learning rate, so decay
    /// and moments take part.
    Optimizer { opt: &'a mut Optimizer<T>, lr: f64 },
    /// Plain Θ ← Θ − α·g with no decay.
    Raw { alpha: f64 },
}

#[derive(Clone, Debug)]
pub struct DkpPcOutput<T> {
    /// Weight gradients at φ* (evaluated with the phase-1 weights) and the
    /// feedback gradients φ*_ℓ δ_Lᵀ.
    pub grads: GradientSet<T>,
    /// The DKP-style gradients used for the preliminary update.
    pub phase1: GradientSet<T>,
    pub state: InferenceState<T>,
    pub trace: InferenceTrace,
    /// Batch-mean squared output error before any update.
    pub loss: f64,
}

/// Phase 1 shared by the batch and incremental forms: forward pass,
/// direct-feedback gradients from δ_L = −ε_L, preliminary update, and the
/// inference state at t = 0 (old activities, new weights, φ_L = y).
fn preliminary<T: Scalar>(
    net: &mut Network<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    phase1: Phase1<'_, T>,
    ledger: Option<&FlopLedger>,
) -> Result<(GradientSet<T>, InferenceState<T>, f64)> {
    net.require_feedback("dkp-pc")?;
    enter(ledger, Phase::Forward);
    let trace = net.forward(x, ledger)?;
    let delta_out = output_error(trace.output(), y)?;
    let loss = 0.5 * delta_out.norm_sq().f64() / delta_out.shape()[0] as f64;
    let grads = direct_grads(net, &trace, &delta_out, false, ledger)?;
    match phase1 {
        Phase1::Optimizer { opt, lr } => grads.apply_forward(net, opt, lr)?,
        Phase1::Raw { alpha } => {
            let a = -T::of(alpha);
            let (weights, biases) = net.params_mut();
            for (w, g) in weights.iter_mut().zip(&grads.forward) {
                w.axpy(a, g)?;
            }
            if let (Some(b), Some(gb)) = (biases, &grads.bias) {
                for (b, g) in b.iter_mut().zip(gb) {
                    b.axpy(a, g)?;
                }
            }
        }
    }
    let mut phi = Vec::with_capacity(net.depth() + 1);
    phi.push(trace.input.clone());
    phi.extend(trace.layers.iter().map(|t| t.x.clone()));
    let out = phi.last_mut().expect("depth ≥ 1");
    *out = y.clone().reshape(out.shape())?;
    let state = InferenceState::from_activities(net, phi, ledger)?;
    Ok((grads, state, loss))
}

/// Feedback gradients φ_ℓ δ_Lᵀ with δ_L = −ε_L taken from `state`.
fn feedback_grads<T: Scalar>(net: &Network<T>, state: &InferenceState<T>, ledger: Option<&FlopLedger>) -> Result<Vec<Tensor<T>>> {
    enter(ledger, Phase::WeightUpdate);
    let batch = state.batch();
    let depth = net.depth();
    let delta_out = state.eps[depth - 1].scale(-T::one()).reshape(&[batch, net.output_size()])?;
    (1..depth)
        .map(|l| {
            let phi = state.phi[l].clone().reshape(&[batch, net.block(l - 1).out_size()])?;
            net.feedback_outer(&phi, &delta_out, ledger)
        })
        .collect()
}

/// Direct Kolen-Pollack predictive coding for one batch.
///
/// Phase 1 updates the forward weights in place; phases 2 and 3 run
/// inference on the updated weights and return the gradients to apply next.
pub fn dkppc_step<T: Scalar>(
    net: &mut Network<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    cfg: &LearnerConfig,
    phase1: Phase1<'_, T>,
    ledger: Option<&FlopLedger>,
) -> Result<DkpPcOutput<T>> {
    let (p1, state, loss) = preliminary(net, x, y, phase1, ledger)?;
    let (state, trace) = pc_infer_from(net, state, cfg, ledger)?;
    let mut grads = state.weight_grads(net, ledger)?;
    grads.feedback = Some(feedback_grads(net, &state, ledger)?);
    Ok(DkpPcOutput { grads, phase1: p1, state, trace, loss })
}

/// Incremental DKP-PC: phase 1 at construction, then one forward gradient
/// per sweep, and the feedback gradient once at the end.
#[derive(Clone, Debug)]
pub struct IdkpPcSession<T> {
    inner: IpcSession<T>,
    pub phase1: GradientSet<T>,
    pub loss: f64,
}

impl<T: Scalar> IdkpPcSession<T> {
    pub fn new(
        net: &mut Network<T>,
        x: &Tensor<T>,
        y: &Tensor<T>,
        cfg: &LearnerConfig,
        phase1: Phase1<'_, T>,
        ledger: Option<&FlopLedger>,
    ) -> Result<Self> {
        let (p1, state, loss) = preliminary(net, x, y, phase1, ledger)?;
        Ok(Self { inner: IpcSession::from_state(state, cfg), phase1: p1, loss })
    }

    pub fn state(&self) -> &InferenceState<T> {
        &self.inner.state
    }

    pub fn trace(&self) -> &InferenceTrace {
        &self.inner.trace
    }

    pub fn next_grad(&mut self, net: &Network<T>, ledger: Option<&FlopLedger>) -> Result<Option<GradientSet<T>>> {
        self.inner.next_grad(net, ledger)
    }

    /// Feedback gradients from the final state.
    pub fn finish(&self, net: &Network<T>, ledger: Option<&FlopLedger>) -> Result<Vec<Tensor<T>>> {
        feedback_grads(net, &self.inner.state, ledger)
    }
}
