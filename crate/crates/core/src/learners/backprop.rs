use super::{enter, GradientSet};
use crate::error::{dim_err, Result};
use crate::netgraph::{ForwardTrace, Network};
use crate::numkit::{FlopLedger, Phase, Scalar, Tensor};

/// δ_L = x_L − y as a `[B, d_L]` matrix.
pub fn output_error<T: Scalar>(output: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    if output.len() != y.len() {
        return Err(dim_err!("target has {} values, network output {}", y.len(), output.len()));
    }
    let batch = output.shape()[0];
    let d = output.len() / batch;
    output.clone().reshape(&[batch, d])?.sub(&y.clone().reshape(&[batch, d])?)
}

/// Batch mean of ½‖x_L − y‖².
pub fn squared_error<T: Scalar>(output: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    let e = output_error(output, y)?;
    let batch = e.shape()[0] as f64;
    Ok(0.5 * e.data().iter().map(|v| v.f64() * v.f64()).sum::<f64>() / batch)
}

fn bias_grad<T: Scalar>(net: &Network<T>, l: usize, delta: &Tensor<T>) -> Option<Tensor<T>> {
    net.has_bias().then(|| net.block_bias_grad(l, delta))
}

/// Gradients of the batch-mean squared error by backpropagation.
pub fn bp_step<T: Scalar>(net: &Network<T>, x: &Tensor<T>, y: &Tensor<T>, ledger: Option<&FlopLedger>) -> Result<GradientSet<T>> {
    enter(ledger, Phase::Forward);
    let trace = net.forward(x, ledger)?;
    bp_from_trace(net, &trace, y, ledger)
}

pub(crate) fn bp_from_trace<T: Scalar>(
    net: &Network<T>,
    trace: &ForwardTrace<T>,
    y: &Tensor<T>,
    ledger: Option<&FlopLedger>,
) -> Result<GradientSet<T>> {
    let depth = net.depth();
    let mut forward = vec![None; depth];
    let mut bias = vec![None; depth];
    let mut e = output_error(trace.output(), y)?;
    for l in (0..depth).rev() {
        let delta = net.block_delta(l, &trace.layers[l], &e)?;
        enter(ledger, Phase::WeightUpdate);
        forward[l] = Some(net.block_weight_grad(l, &delta, trace.block_input(l), ledger)?);
        bias[l] = bias_grad(net, l, &delta);
        if l > 0 {
            enter(ledger, Phase::ErrorTransport);
            e = net.block_input_grad(l, &delta, ledger)?;
        }
    }
    Ok(GradientSet::new(
        forward.into_iter().map(|g| g.expect("every layer visited")).collect(),
        net.has_bias().then(|| bias.into_iter().map(|g| g.expect("every layer visited")).collect()),
    ))
}

/// Direct feedback alignment: hidden layers receive f′(z_ℓ) ⊙ Ψ_ℓ δ_L, the
/// last layer the exact output error. Ψ is left untouched.
pub fn dfa_step<T: Scalar>(net: &Network<T>, x: &Tensor<T>, y: &Tensor<T>, ledger: Option<&FlopLedger>) -> Result<GradientSet<T>> {
    net.require_feedback("dfa")?;
    enter(ledger, Phase::Forward);
    let trace = net.forward(x, ledger)?;
    direct_from_trace(net, &trace, y, false, ledger)
}

/// Direct Kolen-Pollack: DFA forward gradients plus feedback gradients
/// x_ℓ δ_Lᵀ for every Ψ_ℓ.
pub fn dkp_step<T: Scalar>(net: &Network<T>, x: &Tensor<T>, y: &Tensor<T>, ledger: Option<&FlopLedger>) -> Result<GradientSet<T>> {
    net.require_feedback("dkp")?;
    enter(ledger, Phase::Forward);
    let trace = net.forward(x, ledger)?;
    direct_from_trace(net, &trace, y, true, ledger)
}

/// Shared DFA/DKP body. `delta_out` is δ_L; callers in the PC family pass
/// −ε_L, which equals it whenever φ_{L−1} is the forward activation.
pub(crate) fn direct_grads<T: Scalar>(
    net: &Network<T>,
    trace: &ForwardTrace<T>,
    delta_out: &Tensor<T>,
    with_feedback: bool,
    ledger: Option<&FlopLedger>,
) -> Result<GradientSet<T>> {
    let depth = net.depth();
    let mut forward = Vec::with_capacity(depth);
    let mut bias = Vec::with_capacity(depth);
    for l in 0..depth {
        let e = if l + 1 == depth {
            delta_out.clone()
        } else {
            enter(ledger, Phase::ErrorTransport);
            net.feedback_project(l, delta_out, ledger)?
        };
        let delta = net.block_delta(l, &trace.layers[l], &e)?;
        enter(ledger, Phase::WeightUpdate);
        forward.push(net.block_weight_grad(l, &delta, trace.block_input(l), ledger)?);
        bias.extend(bias_grad(net, l, &delta));
    }
    let mut set = GradientSet::new(forward, net.has_bias().then_some(bias));
    if with_feedback {
        enter(ledger, Phase::WeightUpdate);
        let batch = delta_out.shape()[0];
        let fb = (0..depth - 1)
            .map(|l| {
                let x = trace.layers[l].x.clone().reshape(&[batch, net.block(l).out_size()])?;
                net.feedback_outer(&x, delta_out, ledger)
            })
            .collect::<Result<Vec<_>>>()?;
        set.feedback = Some(fb);
    }
    Ok(set)
}

pub(crate) fn direct_from_trace<T: Scalar>(
    net: &Network<T>,
    trace: &ForwardTrace<T>,
    y: &Tensor<T>,
    with_feedback: bool,
    ledger: Option<&FlopLedger>,
) -> Result<GradientSet<T>> {
    let delta_out = output_error(trace.output(), y)?;
    direct_grads(net, trace, &delta_out, with_feedback, ledger)
}
