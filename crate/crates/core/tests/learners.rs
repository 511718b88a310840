use lll_core::learners::*;
use lll_core::netgraph::{build_mlp, LayerSpec, Network};
use lll_core::numkit::{Activation, Initializer, Rng, Tensor};
use lll_core::optim::{OptimConfig, Optimizer};
use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

const H: f64 = 1e-6;

fn random(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
}

fn tanh_net(seed: u64, dims: &[usize], feedback: bool) -> Network<f64> {
    let mut rng = Rng::seed(seed);
    let mut net = build_mlp(dims[0], &dims[1..dims.len() - 1], dims[dims.len() - 1], Activation::Tanh, Initializer::XavierNormal, &mut rng).unwrap();
    if feedback {
        net.attach_feedback(Initializer::XavierNormal, &mut rng).unwrap();
    }
    net
}

fn batch(seed: u64, d_in: usize, d_out: usize, n: usize) -> (Tensor<f64>, Tensor<f64>) {
    let mut rng = Rng::seed(seed);
    (random(&mut rng, &[n, d_in]), random(&mut rng, &[n, d_out]))
}

fn close(a: &Tensor<f64>, b: &Tensor<f64>, rtol: f64, atol: f64) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= atol + rtol * x.abs().max(y.abs()))
}

/// Central differences of `f` with respect to every entry of weight `l`.
fn fd_weight(net: &Network<f64>, l: usize, f: impl Fn(&Network<f64>) -> f64) -> Tensor<f64> {
    let mut out = net.weight(l).zeros_like();
    for i in 0..out.len() {
        let mut plus = net.clone();
        plus.weights_mut()[l].data_mut()[i] += H;
        let mut minus = net.clone();
        minus.weights_mut()[l].data_mut()[i] -= H;
        out.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * H);
    }
    out
}

#[test]
fn bp_hand_oracle_and_zero_error() {
    let specs = [LayerSpec::dense(1, 1, Activation::Identity)];
    let net = Network::from_parts(&[1], &specs, vec![Tensor::from_vec(&[1, 1], vec![2.0]).unwrap()], None, None).unwrap();
    let x = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
    let y = Tensor::from_vec(&[1, 1], vec![0.0]).unwrap();
    assert_eq!(output_error(&net.predict(&x).unwrap(), &y).unwrap().data(), &[2.0]);
    assert_eq!(bp_step(&net, &x, &y, None).unwrap().forward[0].data(), &[2.0]);

    let net = tanh_net(1, &[4, 5, 3], true);
    let (x, _) = batch(2, 4, 3, 6);
    let y = net.predict(&x).unwrap();
    for g in [bp_step(&net, &x, &y, None), dfa_step(&net, &x, &y, None), dkp_step(&net, &x, &y, None)] {
        let g = g.unwrap();
        assert!(g.forward.iter().chain(g.feedback.iter().flatten()).all(|t| t.max_abs() == 0.0));
    }
}

#[test]
fn bp_matches_finite_differences() {
    let net = tanh_net(3, &[5, 4, 4, 3], false);
    let (x, y) = batch(4, 5, 3, 4);
    let g = bp_step(&net, &x, &y, None).unwrap();
    let loss = |n: &Network<f64>| squared_error(&n.predict(&x).unwrap(), &y).unwrap();
    for l in 0..3 {
        let fd = fd_weight(&net, l, loss);
        assert!(close(&g.forward[l], &fd, 1e-4, 1e-7), "layer {l}");
    }
}

#[test]
fn dfa_uses_exact_output_error_and_needs_feedback() {
    let net = tanh_net(5, &[6, 5, 4, 3], true);
    let (x, y) = batch(6, 6, 3, 5);
    let bp = bp_step(&net, &x, &y, None).unwrap();
    let dfa = dfa_step(&net, &x, &y, None).unwrap();
    assert_eq!(dfa.forward[2], bp.forward[2]);
    assert!(dfa.feedback.is_none());
    let bare = tanh_net(5, &[6, 5, 4, 3], false);
    assert!(matches!(dfa_step(&bare, &x, &y, None), Err(lll_core::Error::Config(_))));
    assert!(matches!(dkp_step(&bare, &x, &y, None), Err(lll_core::Error::Config(_))));
}

#[test]
fn dfa_equals_bp_with_transposed_feedback() {
    for seed in 0..10u64 {
        let mut net = tanh_net(seed, &[7, 5, 4], true);
        net.set_feedback(vec![net.weight(1).transpose()]).unwrap();
        let (x, y) = batch(seed + 50, 7, 4, 3);
        let bp = bp_step(&net, &x, &y, None).unwrap();
        let dfa = dfa_step(&net, &x, &y, None).unwrap();
        for (a, b) in bp.forward.iter().zip(&dfa.forward) {
            assert!(close(a, b, 1e-12, 1e-15), "seed {seed}");
        }
    }
}

#[test]
fn dkp_feedback_gradient_is_an_outer_product() {
    // x_1 = [1, 0] after an identity hidden layer, δ_L = [2]
    let specs = [LayerSpec::dense(2, 2, Activation::Identity), LayerSpec::dense(2, 1, Activation::Identity)];
    let w0 = Tensor::eye(2).unwrap();
    let w1 = Tensor::from_vec(&[1, 2], vec![2.0, 5.0]).unwrap();
    let psi = Tensor::from_vec(&[2, 1], vec![0.3, -0.1]).unwrap();
    let net = Network::<f64>::from_parts(&[2], &specs, vec![w0, w1], None, Some(vec![psi])).unwrap();
    let x = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
    let y = Tensor::from_vec(&[1, 1], vec![0.0]).unwrap();
    let g = dkp_step(&net, &x, &y, None).unwrap();
    assert_eq!(g.feedback.as_ref().unwrap()[0].data(), &[2.0, 0.0]);

    let net = tanh_net(7, &[6, 5, 4, 3], true);
    let (x, y) = batch(8, 6, 3, 4);
    let g = dkp_step(&net, &x, &y, None).unwrap();
    for (fg, psi) in g.feedback.unwrap().iter().zip(net.feedback().unwrap()) {
        assert_eq!(fg.shape(), psi.shape());
    }
}

#[test]
fn pc_at_equilibrium_never_moves() {
    let net = tanh_net(9, &[5, 4, 4, 3], false);
    let (x, _) = batch(10, 5, 3, 3);
    let y = net.predict(&x).unwrap();
    let cfg = LearnerConfig::new(Algorithm::Pc, 0.3, 6);
    let (state, trace) = pc_infer(&net, &x, &y, &cfg, None).unwrap();
    assert!(trace.energy.iter().all(|&e| e == 0.0));
    let init = InferenceState::forward_init(&net, &x, Some(&y), None).unwrap();
    assert_eq!(state.phi, init.phi);
    let (g, _, _) = pc_step(&net, &x, &y, &cfg, None).unwrap();
    assert!(g.forward.iter().all(|t| t.max_abs() == 0.0));
}

#[test]
fn pc_without_sweeps_reproduces_bp_at_the_output() {
    let net = tanh_net(11, &[5, 4, 3], false);
    let (x, y) = batch(12, 5, 3, 4);
    let (g, state, trace) = pc_step(&net, &x, &y, &LearnerConfig::new(Algorithm::Pc, 0.1, 0), None).unwrap();
    assert_eq!(state.t, 0);
    assert_eq!(trace.energy.len(), 1);
    let bp = bp_step(&net, &x, &y, None).unwrap();
    assert!(close(&g.forward[1], &bp.forward[1], 1e-14, 1e-15));
    // hidden errors are still zero, so are their gradients
    assert_eq!(g.forward[0].max_abs(), 0.0);
}

#[test]
fn pc_gradients_match_finite_differences_of_energy() {
    let net = tanh_net(13, &[5, 4, 4, 3], false);
    let (x, y) = batch(14, 5, 3, 3);
    let cfg = LearnerConfig::new(Algorithm::Pc, 0.2, 3);
    let (g, state, _) = pc_step(&net, &x, &y, &cfg, None).unwrap();
    let energy = |n: &Network<f64>| InferenceState::from_activities(n, state.phi.clone(), None).unwrap().energy();
    for l in 0..3 {
        assert!(close(&g.forward[l], &fd_weight(&net, l, energy), 1e-4, 1e-7), "layer {l}");
    }
    // Δφ_ℓ = −γ ∂F/∂φ_ℓ per sample; energy() is a batch mean, hence the factor B
    let b = state.batch() as f64;
    for l in 1..3 {
        let d = state.activity_direction(&net, l, None).unwrap();
        for i in 0..d.len() {
            let shift = |h: f64| {
                let mut phi = state.phi.clone();
                phi[l].data_mut()[i] += h;
                InferenceState::from_activities(&net, phi, None).unwrap().energy()
            };
            let fd = -b * (shift(H) - shift(-H)) / (2.0 * H);
            let v = d.data()[i];
            assert!((v - fd).abs() <= 1e-7 + 1e-4 * v.abs().max(fd.abs()), "φ_{l}[{i}]: {v} vs {fd}");
        }
    }
}

#[test]
fn jacobi_sweep_reads_only_the_pre_sweep_state() {
    // each layer's step computed in isolation from the same snapshot, in
    // reverse order, gives the same sweep
    let net = tanh_net(15, &[5, 6, 5, 4, 3], false);
    let (x, y) = batch(16, 5, 3, 2);
    let mut s = InferenceState::forward_init(&net, &x, Some(&y), None).unwrap();
    s.sweep(&net, 0.3, SweepOrder::Jacobi, None).unwrap();
    let snapshot = s.clone();
    let mut manual = snapshot.phi.clone();
    for l in (1..4).rev() {
        let d = snapshot.activity_direction(&net, l, None).unwrap();
        manual[l].axpy(0.3, &d).unwrap();
    }
    s.sweep(&net, 0.3, SweepOrder::Jacobi, None).unwrap();
    assert_eq!(s.phi, manual);
}

#[test]
fn incremental_pc_reductions() {
    let net = tanh_net(17, &[5, 4, 4, 3], false);
    let (x, y) = batch(18, 5, 3, 3);
    let one = LearnerConfig::new(Algorithm::Ipc, 0.2, 1);
    let streamed = ipc_step(&net, &x, &y, &one, None).unwrap();
    let (batch_grads, _, _) = pc_step(&net, &x, &y, &one, None).unwrap();
    assert_eq!(streamed.len(), 1);
    assert_eq!(streamed[0], batch_grads);

    let frozen = LearnerConfig::new(Algorithm::Ipc, 0.0, 4);
    let streamed = ipc_step(&net, &x, &y, &frozen, None).unwrap();
    let (at_init, _, _) = pc_step(&net, &x, &y, &LearnerConfig::new(Algorithm::Pc, 0.0, 0), None).unwrap();
    assert_eq!(streamed.len(), 4);
    assert!(streamed.iter().all(|g| *g == at_init));

    let mut session = IpcSession::new(&net, &x, &y, &LearnerConfig::new(Algorithm::Ipc, 0.2, 5), None).unwrap();
    while session.next_grad(&net, None).unwrap().is_some() {}
    assert_eq!(session.trace.energy.len(), 6);
    assert!(session.trace.energy.iter().all(|e| e.is_finite()));
}

#[test]
fn batch_mean_activity_step_divides_by_batch_size() {
    let net = tanh_net(19, &[5, 4, 4, 3], false);
    let (x, y) = batch(20, 5, 3, 4);
    let mut mean = LearnerConfig::new(Algorithm::Pc, 0.8, 3);
    mean.activity_step = ActivityStep::BatchMean;
    let per_sample = LearnerConfig::new(Algorithm::Pc, 0.2, 3);
    let (g_mean, s_mean, _) = pc_step(&net, &x, &y, &mean, None).unwrap();
    let (g_each, s_each, _) = pc_step(&net, &x, &y, &per_sample, None).unwrap();
    assert_eq!(g_mean, g_each);
    assert_eq!(s_mean.phi, s_each.phi);
    assert_eq!("batch-mean".parse::<ActivityStep>().unwrap(), ActivityStep::BatchMean);
    assert!("median".parse::<ActivityStep>().is_err());
}

fn sgd() -> Optimizer<f64> {
    Optimizer::new(OptimConfig::sgd(0.05)).unwrap()
}

#[test]
fn dkppc_makes_every_layer_err_at_once() {
    let net = tanh_net(19, &[6, 5, 5, 4, 3], true);
    let (x, y) = batch(20, 6, 3, 4);
    let cfg = LearnerConfig::new(Algorithm::DkpPc, 0.1, 1);
    let mut updated = net.clone();
    let mut opt = sgd();
    let out = dkppc_step(&mut updated, &x, &y, &cfg, Phase1::Optimizer { opt: &mut opt, lr: 0.05 }, None).unwrap();
    assert!(out.trace.eps_norms[0].iter().all(|&n| n > 0.0), "{:?}", out.trace.eps_norms[0]);
    assert_ne!(updated.weights(), net.weights());
    // phase 1 is the DKP direction with the exact output error
    let dkp = dkp_step(&net, &x, &y, None).unwrap();
    assert_eq!(out.phase1.forward, dkp.forward);
    assert_eq!(out.grads.feedback.as_ref().unwrap().len(), 3);

    // already correct: nothing moves
    let exact = net.predict(&x).unwrap();
    let mut same = net.clone();
    let out = dkppc_step(&mut same, &x, &exact, &cfg, Phase1::Raw { alpha: 0.1 }, None).unwrap();
    assert_eq!(same.weights(), net.weights());
    assert!(out.grads.forward.iter().all(|g| g.max_abs() == 0.0));
    assert!(out.grads.feedback.unwrap().iter().all(|g| g.max_abs() == 0.0));
}

#[test]
fn incremental_dkppc_reduces_to_the_batch_form() {
    let net = tanh_net(21, &[6, 5, 4, 3], true);
    let (x, y) = batch(22, 6, 3, 4);
    let cfg = LearnerConfig::new(Algorithm::IdkpPc, 0.1, 1);
    let mut a = net.clone();
    let out = dkppc_step(&mut a, &x, &y, &cfg, Phase1::Raw { alpha: 0.05 }, None).unwrap();
    let mut b = net.clone();
    let mut session = IdkpPcSession::new(&mut b, &x, &y, &cfg, Phase1::Raw { alpha: 0.05 }, None).unwrap();
    let g = session.next_grad(&b, None).unwrap().unwrap();
    assert!(session.next_grad(&b, None).unwrap().is_none());
    assert_eq!(g.forward, out.grads.forward);
    assert_eq!(&session.finish(&b, None).unwrap(), out.grads.feedback.as_ref().unwrap());

    // frozen activities: every sweep emits the same gradient
    let frozen = LearnerConfig::new(Algorithm::IdkpPc, 0.0, 3);
    let mut c = net.clone();
    let mut session = IdkpPcSession::new(&mut c, &x, &y, &frozen, Phase1::Raw { alpha: 0.05 }, None).unwrap();
    let grads: Vec<_> = std::iter::from_fn(|| session.next_grad(&c, None).unwrap()).collect();
    assert_eq!(grads.len(), 3);
    assert!(grads.windows(2).all(|w| w[0] == w[1]));
}

// Holds for image-sized inputs, where the phase-1 step on the first layer
// scales with ‖x‖². On tiny nets the drop in output error can win instead.
#[test]
fn dkppc_energy_starts_above_pc() {
    let mut rng = Rng::seed(23);
    let mut net = build_mlp::<f64>(784, &[32, 32], 10, Activation::Tanh, Initializer::XavierNormal, &mut rng).unwrap();
    net.attach_feedback(Initializer::XavierNormal, &mut rng).unwrap();
    let x = Tensor::from_vec(&[8, 784], (0..8 * 784).map(|_| rng.unit()).collect()).unwrap();
    let mut y = vec![0.0; 80];
    for b in 0..8 {
        y[b * 10 + rng.below(10)] = 1.0;
    }
    let y = Tensor::from_vec(&[8, 10], y).unwrap();
    let (_, pc) = pc_infer(&net, &x, &y, &LearnerConfig::new(Algorithm::Pc, 0.1, 3), None).unwrap();
    let mut m = net.clone();
    let out = dkppc_step(&mut m, &x, &y, &LearnerConfig::new(Algorithm::DkpPc, 0.1, 3), Phase1::Raw { alpha: 0.01 }, None).unwrap();
    assert!(out.trace.energy[0] > pc.energy[0], "{} vs {}", out.trace.energy[0], pc.energy[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // ε_L(0) = −δ_L once φ_L is clamped
    #[test]
    fn output_error_sign_bridge(seed in any::<u64>(), n in 1usize..5) {
        let net = tanh_net(seed, &[4, 5, 3], false);
        let (x, y) = batch(seed ^ 1, 4, 3, n);
        let s = InferenceState::forward_init(&net, &x, Some(&y), None).unwrap();
        let delta = output_error(&net.predict(&x).unwrap(), &y).unwrap();
        let neg = s.eps[1].scale(-1.0);
        prop_assert_eq!(neg.data(), delta.data());
        prop_assert_eq!(s.eps[0].max_abs(), 0.0);
    }

    #[test]
    fn free_energy_is_nonnegative_and_zero_only_at_rest(seed in any::<u64>(), steps in 0usize..5, gamma in 0.0..0.9f64) {
        let net = tanh_net(seed, &[4, 5, 4, 3], false);
        let (x, y) = batch(seed ^ 2, 4, 3, 2);
        let (s, trace) = pc_infer(&net, &x, &y, &LearnerConfig::new(Algorithm::Pc, gamma, steps), None).unwrap();
        prop_assert!(trace.energy.iter().all(|&e| e >= 0.0 && e.is_finite()));
        let all_zero = s.eps.iter().all(|e| e.max_abs() == 0.0);
        prop_assert_eq!(s.energy() == 0.0, all_zero);
    }

    // ε_ℓ = φ_ℓ − f(Θφ_{ℓ−1}) after every sweep
    #[test]
    fn errors_are_consistent_after_sweeps(seed in any::<u64>(), steps in 1usize..5) {
        let net = tanh_net(seed, &[4, 5, 4, 3], false);
        let (x, y) = batch(seed ^ 3, 4, 3, 2);
        let (s, _) = pc_infer(&net, &x, &y, &LearnerConfig::new(Algorithm::Pc, 0.2, steps), None).unwrap();
        let fresh = InferenceState::from_activities(&net, s.phi.clone(), None).unwrap();
        prop_assert_eq!(&s.eps, &fresh.eps);
    }

    #[test]
    fn gradient_shapes_match_parameters(seed in any::<u64>(), a in 0usize..7) {
        let net = tanh_net(seed, &[4, 5, 4, 3], true);
        let (x, y) = batch(seed ^ 4, 4, 3, 2);
        let algo = Algorithm::ALL[a];
        let cfg = LearnerConfig::new(algo, 0.1, 2);
        let g = match algo {
            Algorithm::Bp => bp_step(&net, &x, &y, None).unwrap(),
            Algorithm::Dfa => dfa_step(&net, &x, &y, None).unwrap(),
            Algorithm::Dkp => dkp_step(&net, &x, &y, None).unwrap(),
            Algorithm::Pc | Algorithm::Ipc => pc_step(&net, &x, &y, &cfg, None).unwrap().0,
            Algorithm::DkpPc | Algorithm::IdkpPc => {
                let mut m = net.clone();
                dkppc_step(&mut m, &x, &y, &cfg, Phase1::Raw { alpha: 0.01 }, None).unwrap().grads
            }
        };
        prop_assert!(g.is_finite());
        for (t, w) in g.forward.iter().zip(net.weights()) {
            prop_assert_eq!(t.shape(), w.shape());
        }
        for (t, p) in g.feedback.iter().flatten().zip(net.feedback().unwrap()) {
            prop_assert_eq!(t.shape(), p.shape());
        }
    }
}
