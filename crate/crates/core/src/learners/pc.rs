use super::{enter, GradientSet, LearnerConfig, SweepOrder};
use crate::error::{dim_err, Result};
use crate::netgraph::{BlockTrace, Network};
use crate::numkit::{FlopLedger, Phase, Scalar, Tensor};

/// Activities φ_0..φ_L with the predictions and errors they imply.
///
/// After every synchronization `traces[l]` is block `l` applied to φ_l and
/// `eps[l]` = φ_{l+1} − traces[l].x, i.e. ε_{l+1}.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceState<T> {
    pub t: usize,
    pub phi: Vec<Tensor<T>>,
    pub eps: Vec<Tensor<T>>,
    pub traces: Vec<BlockTrace<T>>,
}

/// Per-sweep record of an inference run; index 0 is the state before any
/// sweep, so both vectors have T + 1 entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InferenceTrace {
    /// Batch-mean free energy.
    pub energy: Vec<f64>,
    /// `eps_norms[t][l]` = ‖ε_{l+1}(t)‖₂ over the whole batch.
    pub eps_norms: Vec<Vec<f64>>,
}

impl InferenceTrace {
    fn record<T: Scalar>(&mut self, s: &InferenceState<T>) {
        self.energy.push(s.energy());
        self.eps_norms.push(s.eps_norms());
    }
}

/// Batch mean of ½ Σ_ℓ ‖ε_ℓ‖².
pub fn free_energy<T: Scalar>(eps: &[Tensor<T>]) -> f64 {
    let Some(first) = eps.first() else { return 0.0 };
    let batch = first.shape()[0] as f64;
    0.5 * eps.iter().map(|e| e.data().iter().map(|v| v.f64() * v.f64()).sum::<f64>()).sum::<f64>() / batch
}

impl<T: Scalar> InferenceState<T> {
    /// Forward-initialized state. With a target, φ_L is clamped to it, so
    /// only ε_L can be nonzero; without one every error is exactly zero.
    pub fn forward_init(net: &Network<T>, x: &Tensor<T>, y: Option<&Tensor<T>>, ledger: Option<&FlopLedger>) -> Result<Self> {
        enter(ledger, Phase::Forward);
        let trace = net.forward(x, ledger)?;
        let mut phi = Vec::with_capacity(net.depth() + 1);
        phi.push(trace.input.clone());
        phi.extend(trace.layers.iter().map(|t| t.x.clone()));
        if let Some(y) = y {
            let out = phi.last_mut().expect("depth ≥ 1");
            if y.len() != out.len() {
                return Err(dim_err!("target has {} values, network output {}", y.len(), out.len()));
            }
            *out = y.clone().reshape(out.shape())?;
        }
        let eps = phi[1..].iter().zip(&trace.layers).map(|(p, t)| p.sub(&t.x)).collect::<Result<Vec<_>>>()?;
        Ok(Self { t: 0, phi, eps, traces: trace.layers })
    }

    /// State from given activities; predictions are computed with `net`.
    pub fn from_activities(net: &Network<T>, phi: Vec<Tensor<T>>, ledger: Option<&FlopLedger>) -> Result<Self> {
        if phi.len() != net.depth() + 1 {
            return Err(dim_err!("{} activities for a depth-{} network", phi.len(), net.depth()));
        }
        let mut s = Self { t: 0, phi, eps: Vec::new(), traces: Vec::new() };
        enter(ledger, Phase::Inference);
        s.sync(net, ledger)?;
        Ok(s)
    }

    pub fn depth(&self) -> usize {
        self.eps.len()
    }

    pub fn batch(&self) -> usize {
        self.phi[0].shape()[0]
    }

    pub fn energy(&self) -> f64 {
        free_energy(&self.eps)
    }

    pub fn eps_norms(&self) -> Vec<f64> {
        self.eps.iter().map(|e| e.data().iter().map(|v| v.f64() * v.f64()).sum::<f64>().sqrt()).collect()
    }

    /// Recomputes every prediction and error from the current activities.
    pub fn sync(&mut self, net: &Network<T>, ledger: Option<&FlopLedger>) -> Result<()> {
        let depth = net.depth();
        let mut traces = Vec::with_capacity(depth);
        let mut eps = Vec::with_capacity(depth);
        for l in 0..depth {
            let tr = net.block_forward(l, &self.phi[l], ledger)?;
            eps.push(self.phi[l + 1].sub(&tr.x)?);
            traces.push(tr);
        }
        self.traces = traces;
        self.eps = eps;
        Ok(())
    }

    fn sync_layer(&mut self, net: &Network<T>, l: usize, ledger: Option<&FlopLedger>) -> Result<()> {
        let tr = net.block_forward(l, &self.phi[l], ledger)?;
        self.eps[l] = self.phi[l + 1].sub(&tr.x)?;
        self.traces[l] = tr;
        Ok(())
    }

    /// −∂F_sample/∂φ_l for hidden `l`: J_lᵀ ε_{l+1} − ε_l, where J_l is the
    /// Jacobian of block `l` (activation and pooling) at φ_l.
    pub fn activity_direction(&self, net: &Network<T>, l: usize, ledger: Option<&FlopLedger>) -> Result<Tensor<T>> {
        let delta = net.block_delta(l, &self.traces[l], &self.eps[l])?;
        let back = net.block_input_grad(l, &delta, ledger)?;
        back.sub(&self.eps[l - 1])
    }

    /// One inference sweep over the hidden layers, leaving the state synced.
    pub fn sweep(&mut self, net: &Network<T>, gamma: f64, order: SweepOrder, ledger: Option<&FlopLedger>) -> Result<()> {
        enter(ledger, Phase::Inference);
        let depth = net.depth();
        let g = T::of(gamma);
        match order {
            SweepOrder::Jacobi => {
                let steps = (1..depth).map(|l| self.activity_direction(net, l, ledger)).collect::<Result<Vec<_>>>()?;
                for (l, d) in (1..depth).zip(steps) {
                    self.phi[l].axpy(g, &d)?;
                }
            }
            SweepOrder::GaussSeidel => {
                for l in 1..depth {
                    self.sync_layer(net, l - 1, ledger)?;
                    self.sync_layer(net, l, ledger)?;
                    let d = self.activity_direction(net, l, ledger)?;
                    self.phi[l].axpy(g, &d)?;
                }
            }
        }
        self.sync(net, ledger)?;
        self.t += 1;
        Ok(())
    }

    /// ∂F/∂Θ_l = −(f′ ⊙ ε_{l+1}) φ_lᵀ at the current (synced) state.
    pub fn weight_grads(&self, net: &Network<T>, ledger: Option<&FlopLedger>) -> Result<GradientSet<T>> {
        enter(ledger, Phase::WeightUpdate);
        let mut forward = Vec::with_capacity(net.depth());
        let mut bias = Vec::new();
        for l in 0..net.depth() {
            let neg = self.eps[l].scale(-T::one());
            let delta = net.block_delta(l, &self.traces[l], &neg)?;
            forward.push(net.block_weight_grad(l, &delta, &self.phi[l], ledger)?);
            if net.has_bias() {
                bias.push(net.block_bias_grad(l, &delta));
            }
        }
        Ok(GradientSet::new(forward, net.has_bias().then_some(bias)))
    }
}

/// Forward-initializes, clamps φ_L = y and runs `cfg.steps` sweeps.
pub fn pc_infer<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    cfg: &LearnerConfig,
    ledger: Option<&FlopLedger>,
) -> Result<(InferenceState<T>, InferenceTrace)> {
    let state = InferenceState::forward_init(net, x, Some(y), ledger)?;
    pc_infer_from(net, state, cfg, ledger)
}

/// Runs `cfg.steps` sweeps from an existing state.
pub fn pc_infer_from<T: Scalar>(
    net: &Network<T>,
    mut state: InferenceState<T>,
    cfg: &LearnerConfig,
    ledger: Option<&FlopLedger>,
) -> Result<(InferenceState<T>, InferenceTrace)> {
    let mut trace = InferenceTrace::default();
    trace.record(&state);
    for _ in 0..cfg.steps {
        let rate = cfg.activity_rate(state.batch());
        state.sweep(net, rate, cfg.sweep, ledger)?;
        trace.record(&state);
    }
    Ok((state, trace))
}

/// Inference to φ* followed by the weight gradients there.
pub fn pc_step<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    cfg: &LearnerConfig,
    ledger: Option<&FlopLedger>,
) -> Result<(GradientSet<T>, InferenceState<T>, InferenceTrace)> {
    let (state, trace) = pc_infer(net, x, y, cfg, ledger)?;
    let grads = state.weight_grads(net, ledger)?;
    Ok((grads, state, trace))
}

/// Incremental PC: one weight gradient per sweep. The caller may change the
/// network between calls; each sweep reads the weights it is given.
#[derive(Clone, Debug)]
pub struct IpcSession<T> {
    pub state: InferenceState<T>,
    pub trace: InferenceTrace,
    cfg: LearnerConfig,
}

impl<T: Scalar> IpcSession<T> {
    pub fn new(net: &Network<T>, x: &Tensor<T>, y: &Tensor<T>, cfg: &LearnerConfig, ledger: Option<&FlopLedger>) -> Result<Self> {
        let state = InferenceState::forward_init(net, x, Some(y), ledger)?;
        Ok(Self::from_state(state, cfg))
    }

    pub fn from_state(state: InferenceState<T>, cfg: &LearnerConfig) -> Self {
        let mut trace = InferenceTrace::default();
        trace.record(&state);
        Self { state, trace, cfg: *cfg }
    }

    pub fn remaining(&self) -> usize {
        self.cfg.steps.saturating_sub(self.state.t)
    }

    /// Runs the next sweep against `net` and returns the gradient at the new
    /// state, or `None` once T sweeps have been made.
    pub fn next_grad(&mut self, net: &Network<T>, ledger: Option<&FlopLedger>) -> Result<Option<GradientSet<T>>> {
        if self.remaining() == 0 {
            return Ok(None);
        }
        // predictions may be stale if the caller updated the weights
        if self.state.t > 0 {
            enter(ledger, Phase::Inference);
            self.state.sync(net, ledger)?;
        }
        let rate = self.cfg.activity_rate(self.state.batch());
        self.state.sweep(net, rate, self.cfg.sweep, ledger)?;
        self.trace.record(&self.state);
        Ok(Some(self.state.weight_grads(net, ledger)?))
    }
}

/// All per-sweep gradients of an incremental run on a fixed network.
pub fn ipc_step<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    cfg: &LearnerConfig,
    ledger: Option<&FlopLedger>,
) -> Result<Vec<GradientSet<T>>> {
    let mut session = IpcSession::new(net, x, y, cfg, ledger)?;
    let mut out = Vec::with_capacity(cfg.steps);
    while let Some(g) = session.next_grad(net, ledger)? {
        out.push(g);
    }
    Ok(out)
}
