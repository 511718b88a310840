//! Property suites run by `lll verify`. Every suite works in f64 on fixed
//! seeds and reports one line with its worst measured quantity.

use std::fmt;
use std::str::FromStr;

use lll_core::dataio::synth_linear;
use lll_core::diagnostics::{decay_check, delay_check, linear_decomposition_check, omega_decay_check, theorem_fixture};
use lll_core::learners::{bp_step, dfa_step, InferenceState, SweepOrder};
use lll_core::netgraph::{LayerSpec, Network};
use lll_core::numkit::{streams, Activation, Initializer, Rng, Tensor};
use lll_core::{Error, Result};

/// Relative and absolute tolerances of the finite-difference oracle; an
/// entry passes when either is met.
pub const GRAD_RTOL: f64 = 1e-4;
pub const GRAD_ATOL: f64 = 1e-7;
/// Central-difference step.
const FD_STEP: f64 = 1e-6;
pub const OMEGA_RTOL: f64 = 1e-8;
pub const DECOMP_TOL: f64 = 1e-8;
/// DFA and BP take different summation paths, so equality is up to a few ulps
/// of the gradient scale.
pub const EQUIV_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Delay,
    Decay,
    Omega,
    Grad,
    Equiv,
    Decomp,
}

impl Suite {
    pub const ALL: [Suite; 6] = [Suite::Delay, Suite::Decay, Suite::Omega, Suite::Grad, Suite::Equiv, Suite::Decomp];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Delay => "delay",
            Suite::Decay => "decay",
            Suite::Omega => "omega",
            Suite::Grad => "grad",
            Suite::Equiv => "equiv",
            Suite::Decomp => "decomp",
        }
    }

    pub fn run(self) -> Result<SuiteResult> {
        match self {
            Suite::Delay => delay_suite(),
            Suite::Decay => decay_suite(),
            Suite::Omega => omega_suite(),
            Suite::Grad => grad_suite(),
            Suite::Equiv => equiv_suite(),
            Suite::Decomp => decomp_suite(),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `all` expands to every suite.
pub fn parse_suites(s: &str) -> Result<Vec<Suite>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Suite::ALL.to_vec());
    }
    Ok(vec![s.parse()?])
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}; expected delay, decay, omega, grad, equiv, decomp or all")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub suite: Suite,
    pub pass: bool,
    pub detail: String,
}

impl SuiteResult {
    pub fn line(&self) -> String {
        format!("{:<8} {}  {}", self.suite.name(), if self.pass { "PASS" } else { "FAIL" }, self.detail)
    }
}

/// Runs the suites in order and renders the table; the bool is the overall
/// verdict.
pub fn run_suites(suites: &[Suite]) -> Result<(Vec<SuiteResult>, bool)> {
    let results = suites.iter().map(|s| s.run()).collect::<Result<Vec<_>>>()?;
    let pass = results.iter().all(|r| r.pass);
    Ok((results, pass))
}

/// 20 tanh MLPs of depths 3 to 6, wrong targets, γ = 0.1.
pub fn delay_suite() -> Result<SuiteResult> {
    let mut failures = 0;
    let mut max_early = 0.0f64;
    let mut min_arrival = f64::INFINITY;
    for seed in 0..20u64 {
        let depth = 3 + (seed as usize % 4);
        let (net, x, y) = theorem_fixture(seed, depth, 4)?;
        let (m, pass) = delay_check(&net, &x, &y, 0.1)?;
        failures += usize::from(!pass);
        max_early = max_early.max(m.max_before_arrival());
        min_arrival = min_arrival.min(m.min_at_arrival().unwrap_or(0.0));
    }
    Ok(SuiteResult {
        suite: Suite::Delay,
        pass: failures == 0,
        detail: format!("20 nets, {failures} failing; max ‖ε‖ before arrival {max_early:.1e}, min at arrival {min_arrival:.3e}"),
    })
}

pub fn decay_suite() -> Result<SuiteResult> {
    let (mut n, mut failures) = (0usize, 0usize);
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let depth = 3 + (seed as usize % 4);
        let (net, x, y) = theorem_fixture(seed, depth, 3)?;
        for gamma in [1e-4, 1e-2, 0.5] {
            for e in decay_check(&net, &x, &y, gamma)? {
                n += 1;
                failures += usize::from(!e.holds());
                if e.bound > 0.0 {
                    worst = worst.max(e.measured / e.bound);
                }
            }
        }
    }
    Ok(SuiteResult {
        suite: Suite::Decay,
        pass: failures == 0 && n > 0,
        detail: format!("{n} entries over γ ∈ {{1e-4, 1e-2, 0.5}}, {failures} failing; max measured/bound {worst:.3e}"),
    })
}

fn linear_net(seed: u64, dims: &[usize]) -> Result<Network<f64>> {
    let specs: Vec<LayerSpec> = dims.windows(2).map(|w| LayerSpec::dense(w[0], w[1], Activation::Identity)).collect();
    let rng = Rng::seed(seed);
    let mut net = Network::new(&[dims[0]], &specs, Initializer::XavierNormal, &mut rng.fork(streams::FORWARD_INIT), false)?;
    net.attach_feedback(Initializer::XavierNormal, &mut rng.fork(streams::FEEDBACK_INIT))?;
    Ok(net)
}

fn linear_batch(seed: u64, d_in: usize, d_out: usize, n: usize) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let (ds, _) = synth_linear::<f64>(seed, d_in, d_out, n)?;
    ds.batch(&(0..n).collect::<Vec<_>>())
}

/// α = 0.1 for 50 steps on 5 linear nets.
pub fn omega_suite() -> Result<SuiteResult> {
    let alpha = 0.1;
    let mut worst = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for seed in 0..5u64 {
        let net = linear_net(seed, &[6, 5, 4, 3])?;
        let (x, y) = linear_batch(seed, 6, 3, 8)?;
        let trace = omega_decay_check(&net, &x, &y, alpha, 50)?;
        worst = worst.max(trace.max_deviation());
        for r in trace.ratios().into_iter().flatten() {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok(SuiteResult {
        suite: Suite::Omega,
        pass: worst <= OMEGA_RTOL && lo.is_finite(),
        detail: format!("α = {alpha}: ratio in [{lo:.12}, {hi:.12}], max rel deviation from (1−α)ᵗ {worst:.2e}"),
    })
}

/// Tally of analytic derivatives compared with central differences.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradStats {
    pub checked: usize,
    pub failed: usize,
    /// Worst relative error among entries of magnitude above the absolute
    /// tolerance; smaller ones carry only cancellation noise.
    pub max_rel: f64,
    pub max_abs: f64,
}

impl GradStats {
    fn push(&mut self, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        let rel = abs / scale.max(f64::MIN_POSITIVE);
        self.checked += 1;
        self.max_abs = self.max_abs.max(abs);
        if scale > GRAD_ATOL {
            self.max_rel = self.max_rel.max(rel);
        }
        self.failed += usize::from(abs > GRAD_ATOL && rel > GRAD_RTOL);
    }

    fn merge(&mut self, o: GradStats) {
        self.checked += o.checked;
        self.failed += o.failed;
        self.max_rel = self.max_rel.max(o.max_rel);
        self.max_abs = self.max_abs.max(o.max_abs);
    }
}

fn random(rng: &mut Rng, shape: &[usize]) -> Result<Tensor<f64>> {
    Tensor::from_vec(shape, (0..shape.iter().product()).map(|_| rng.normal()).collect())
}

/// Pre-activation signs of every block; a perturbation that flips one has
/// crossed a kink, where a central difference is meaningless.
fn sign_pattern(s: &InferenceState<f64>) -> Vec<bool> {
    s.traces.iter().flat_map(|t| t.z.data().iter().map(|&v| v > 0.0)).collect()
}

/// A state with every error nonzero: forward init toward a random target,
/// two sweeps, then noise on the hidden activities.
fn generic_state(net: &Network<f64>, seed: u64, batch: usize) -> Result<InferenceState<f64>> {
    let mut rng = Rng::seed(seed).fork(streams::PROBE);
    let x = random(&mut rng, &[batch, net.input_size()])?;
    let y = random(&mut rng, &[batch, net.output_size()])?;
    let mut s = InferenceState::forward_init(net, &x, Some(&y), None)?;
    for _ in 0..2 {
        s.sweep(net, 0.1, SweepOrder::Jacobi, None)?;
    }
    let mut phi = s.phi.clone();
    for p in &mut phi[1..net.depth()] {
        let noise = random(&mut rng, p.shape())?;
        p.axpy(0.1, &noise)?;
    }
    InferenceState::from_activities(net, phi, None)
}

/// Activity update and weight gradient of one net against central
/// differences of F. The activity direction is the per-sample −∂F/∂φ, i.e.
/// of B·F; weight gradients are of the batch mean F itself.
pub fn grad_check(net: &Network<f64>, seed: u64, batch: usize) -> Result<(GradStats, GradStats)> {
    let s = generic_state(net, seed, batch)?;
    let base = sign_pattern(&s);
    let b = batch as f64;
    let energy_at = |net: &Network<f64>, phi: Vec<Tensor<f64>>| -> Result<Option<f64>> {
        let st = InferenceState::from_activities(net, phi, None)?;
        Ok((sign_pattern(&st) == base).then(|| st.energy()))
    };

    let mut act = GradStats::default();
    for l in 1..net.depth() {
        let dir = s.activity_direction(net, l, None)?;
        for i in 0..s.phi[l].len() {
            let mut plus = s.phi.clone();
            plus[l].data_mut()[i] += FD_STEP;
            let mut minus = s.phi.clone();
            minus[l].data_mut()[i] -= FD_STEP;
            if let (Some(fp), Some(fm)) = (energy_at(net, plus)?, energy_at(net, minus)?) {
                act.push(-dir.data()[i], b * (fp - fm) / (2.0 * FD_STEP));
            }
        }
    }

    let mut wgt = GradStats::default();
    let grads = s.weight_grads(net, None)?;
    for l in 0..net.depth() {
        for i in 0..net.weight(l).len() {
            let mut f = [0.0; 2];
            let mut kink = false;
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut p = net.clone();
                p.weights_mut()[l].data_mut()[i] += sign * FD_STEP;
                match energy_at(&p, s.phi.clone())? {
                    Some(e) => f[k] = e,
                    None => kink = true,
                }
            }
            if !kink {
                wgt.push(grads.forward[l].data()[i], (f[0] - f[1]) / (2.0 * FD_STEP));
            }
        }
        if let Some(bias) = &grads.bias {
            for i in 0..bias[l].len() {
                let mut f = [0.0; 2];
                let mut kink = false;
                for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                    let mut p = net.clone();
                    p.biases_mut().expect("net has biases")[l].data_mut()[i] += sign * FD_STEP;
                    match energy_at(&p, s.phi.clone())? {
                        Some(e) => f[k] = e,
                        None => kink = true,
                    }
                }
                if !kink {
                    wgt.push(bias[l].data()[i], (f[0] - f[1]) / (2.0 * FD_STEP));
                }
            }
        }
    }
    Ok((act, wgt))
}

/// The random 3-layer nets of the gradient suite: dense with biases for each
/// smooth and piecewise-linear activation, plus a conv/pool net.
pub fn grad_nets() -> Result<Vec<Network<f64>>> {
    let acts = [Activation::Tanh, Activation::GELU, "gelu-erf".parse()?, "leaky".parse()?];
    let mut nets = Vec::new();
    for (k, act) in acts.into_iter().enumerate() {
        let specs = [LayerSpec::dense(7, 6, act), LayerSpec::dense(6, 5, act), LayerSpec::dense(5, 4, Activation::Identity)];
        let mut rng = Rng::seed(100 + k as u64);
        nets.push(Network::new(&[7], &specs, Initializer::XavierNormal, &mut rng, true)?);
    }
    let specs = [
        LayerSpec::conv(1, 2, 3, 1, 1, Activation::Tanh),
        LayerSpec::max_pool(2, 2),
        LayerSpec::flatten(),
        LayerSpec::dense(18, 5, Activation::Tanh),
        LayerSpec::dense(5, 3, Activation::Identity),
    ];
    nets.push(Network::new(&[1, 6, 6], &specs, Initializer::XavierNormal, &mut Rng::seed(200), true)?);
    Ok(nets)
}

pub fn grad_suite() -> Result<SuiteResult> {
    let (mut act, mut wgt) = (GradStats::default(), GradStats::default());
    for (k, net) in grad_nets()?.iter().enumerate() {
        let (a, w) = grad_check(net, k as u64, 3)?;
        act.merge(a);
        wgt.merge(w);
    }
    Ok(SuiteResult {
        suite: Suite::Grad,
        pass: act.failed == 0 && wgt.failed == 0 && act.checked > 0 && wgt.checked > 0,
        detail: format!(
            "activity: {} entries, max rel err {:.2e}, max abs err {:.1e}; weights: {} entries, max rel err {:.2e}, max abs err {:.1e}",
            act.checked, act.max_rel, act.max_abs, wgt.checked, wgt.max_rel, wgt.max_abs
        ),
    })
}

/// Largest |a − b| over two gradient sets, and the largest |a|.
fn max_diff(a: &[Tensor<f64>], b: &[Tensor<f64>]) -> (f64, f64) {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (u, v) in a.iter().zip(b) {
        for (p, q) in u.data().iter().zip(v.data()) {
            diff = diff.max((p - q).abs());
            scale = scale.max(p.abs());
        }
    }
    (diff, scale)
}

/// One hidden layer, Ψ₁ := Θ₁ᵀ: the DFA projection is the BP transport.
pub fn equiv_suite() -> Result<SuiteResult> {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = Rng::seed(seed);
        let (d0, d1, d2) = (3 + rng.below(6), 2 + rng.below(8), 2 + rng.below(5));
        let specs = [LayerSpec::dense(d0, d1, Activation::Tanh), LayerSpec::dense(d1, d2, Activation::Identity)];
        let mut net = Network::new(&[d0], &specs, Initializer::XavierNormal, &mut rng.fork(streams::FORWARD_INIT), true)?;
        net.set_feedback(vec![net.weight(1).transpose()])?;
        let batch = 1 + rng.below(6);
        let x = random(&mut rng, &[batch, d0])?;
        let y = random(&mut rng, &[batch, d2])?;
        let bp = bp_step(&net, &x, &y, None)?;
        let dfa = dfa_step(&net, &x, &y, None)?;
        let (mut d, mut s) = max_diff(&bp.forward, &dfa.forward);
        if let (Some(a), Some(b)) = (&bp.bias, &dfa.bias) {
            let (db, sb) = max_diff(a, b);
            d = d.max(db);
            s = s.max(sb);
        }
        worst = worst.max(d / s.max(f64::MIN_POSITIVE));
    }
    Ok(SuiteResult {
        suite: Suite::Equiv,
        pass: worst <= EQUIV_RTOL,
        detail: format!("10 instances; max |dfa − bp| / max|bp| {worst:.2e}"),
    })
}

/// 4-layer linear nets, hidden layers 1 and 2, α = 0.05, γ = 0.1.
pub fn decomp_suite() -> Result<SuiteResult> {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let net = linear_net(seed, &[6, 5, 4, 4, 3])?;
        let (x, y) = linear_batch(seed, 6, 3, 4)?;
        for layer in [1, 2] {
            worst = worst.max(linear_decomposition_check(&net, &x, &y, 0.05, 0.1, layer)?.max_residual());
        }
    }
    Ok(SuiteResult {
        suite: Suite::Decomp,
        pass: worst <= DECOMP_TOL,
        detail: format!("10 nets × 2 layers; max residual {worst:.2e}"),
    })
}
