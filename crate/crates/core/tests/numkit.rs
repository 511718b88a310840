use lll_core::numkit::*;
use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest, Strategy};

const KINDS: [Activation; 5] = [
    Activation::Identity,
    Activation::Tanh,
    Activation::Gelu { exact: false },
    Activation::Gelu { exact: true },
    Activation::LeakyRelu { slope: 0.01 },
];

fn t64(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

#[test]
fn matmul_hand_examples() {
    let a = t64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let b = t64(&[2, 1], &[1.0, 1.0]);
    assert_eq!(matmul(&a, &b).unwrap().data(), &[3.0, 7.0]);
    let v = t64(&[3, 1], &[0.5, -2.0, 7.25]);
    assert_eq!(matmul(&Tensor::eye(3).unwrap(), &v).unwrap(), v);
    assert!(matches!(matmul(&a, &v), Err(lll_core::Error::Dimension(_))));
}

#[test]
fn matmul_records_macs() {
    let ledger = FlopLedger::new();
    let w = Tensor::<f32>::zeros(&[128, 784]).unwrap();
    let x = Tensor::<f32>::zeros(&[784, 1]).unwrap();
    gemm(&w, Op::N, &x, Op::N, Some(&ledger)).unwrap();
    assert_eq!(ledger.total_macs(), 100352);
    assert_eq!(ledger.total_flops(), 2 * 100352);
}

#[test]
fn activation_spot_values() {
    assert_eq!(Activation::Tanh.value(0.0f64), 0.0);
    assert_eq!(Activation::Tanh.derivative(0.0f64), 1.0);
    assert_eq!(Activation::LeakyRelu { slope: 0.01 }.value(-1.0f64), -0.01);
    assert_eq!(Activation::Identity.derivative(3.0f64), 1.0);
    // both GELU forms pass through 0 with slope ½
    for g in [Activation::Gelu { exact: false }, Activation::Gelu { exact: true }] {
        assert_eq!(g.value(0.0f64), 0.0);
        assert!((g.derivative(0.0f64) - 0.5).abs() < 1e-15);
    }
}

// 1001-point grid on [−5, 5]; kinks are excluded because the one-sided
// slopes differ there
#[test]
fn derivatives_match_central_differences() {
    let h = 1e-6;
    for f in KINDS {
        let mut worst = 0.0f64;
        for i in 0..=1000 {
            let x = -5.0 + 0.01 * i as f64;
            if f.kinks().iter().any(|k| (x - k).abs() < 2.0 * h) {
                continue;
            }
            let fd = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
            let d = f.derivative(x);
            let rel = (d - fd).abs() / fd.abs().max(d.abs()).max(1e-8);
            worst = worst.max(if fd.abs() < 1e-7 { (d - fd).abs() } else { rel });
        }
        assert!(worst <= 1e-4, "{f}: {worst}");
    }
}

#[test]
fn initializer_contracts() {
    let mut rng = Rng::seed(5);
    let q: Tensor<f64> = init_matrix(Initializer::Orthogonal, 4, 4, &mut rng).unwrap();
    assert!(orthogonality_residual(&q) <= 1e-5);
    let w: Tensor<f64> = init_matrix(Initializer::KaimingUniform, 1000, 1000, &mut rng).unwrap();
    let var = w.norm_sq() / w.len() as f64;
    assert!((var / (2.0 / 1000.0) - 1.0).abs() < 0.1, "var {var}");
    assert!(init_matrix::<f64>(Initializer::XavierUniform, 0, 3, &mut rng).is_err());
}

#[test]
fn rng_streams_are_stable() {
    let a: Vec<f64> = {
        let mut r = Rng::seed(123);
        (0..5).map(|_| r.unit()).collect()
    };
    let mut r = Rng::seed(123);
    assert_eq!(a, (0..5).map(|_| r.unit()).collect::<Vec<_>>());
    let mut f1 = Rng::seed(123).fork(1);
    let mut f2 = Rng::seed(123).fork(2);
    assert_ne!(f1.unit(), f2.unit());
    let p = Rng::seed(9).permutation(50);
    let mut s = p.clone();
    s.sort_unstable();
    assert_eq!(s, (0..50).collect::<Vec<_>>());
}

fn matrix(max: usize) -> impl Strategy<Value = Tensor<f64>> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| {
        prop::collection::vec(-1e3..1e3f64, r * c).prop_map(move |d| Tensor::from_vec(&[r, c], d).unwrap())
    })
}

proptest! {
    #[test]
    fn identity_product_is_exact(a in matrix(9)) {
        let (r, c) = a.matrix_dims();
        prop_assert_eq!(matmul(&Tensor::eye(r).unwrap(), &a).unwrap(), a.clone());
        prop_assert_eq!(matmul(&a, &Tensor::eye(c).unwrap()).unwrap(), a);
    }

    #[test]
    fn shape_matches_data(a in matrix(9)) {
        prop_assert_eq!(a.shape().iter().product::<usize>(), a.len());
        let t = a.transpose();
        prop_assert_eq!(t.shape(), &[a.shape()[1], a.shape()[0]]);
        prop_assert_eq!(t.transpose(), a);
    }

    #[test]
    fn activations_stay_finite(x in -1e6..1e6f64, k in 0usize..5) {
        let f = KINDS[k];
        prop_assert!(f.value(x).is_finite());
        prop_assert!(f.derivative(x).is_finite());
        prop_assert!(f.value(x as f32).is_finite());
    }

    #[test]
    fn initializers_are_pure(seed in any::<u64>(), r in 1usize..12, c in 1usize..12, k in 0usize..6) {
        let kinds = [
            Initializer::XavierUniform,
            Initializer::XavierNormal,
            Initializer::KaimingUniform,
            Initializer::KaimingNormal,
            Initializer::Orthogonal,
            Initializer::TorchDefault,
        ];
        let a: Tensor<f64> = init_matrix(kinds[k], r, c, &mut Rng::seed(seed)).unwrap();
        let b: Tensor<f64> = init_matrix(kinds[k], r, c, &mut Rng::seed(seed)).unwrap();
        prop_assert!(a.is_finite());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn orthogonal_rows_or_columns(seed in any::<u64>(), r in 1usize..10, c in 1usize..10) {
        let q: Tensor<f64> = init_matrix(Initializer::Orthogonal, r, c, &mut Rng::seed(seed)).unwrap();
        prop_assert!(orthogonality_residual(&q) <= 1e-5);
    }

    #[test]
    fn flops_are_twice_macs(sizes in prop::collection::vec((1usize..20, 1usize..20, 1usize..20), 1..6)) {
        let ledger = FlopLedger::new();
        let mut want = 0u64;
        for (m, k, n) in sizes {
            let a = Tensor::<f64>::zeros(&[m, k]).unwrap();
            let b = Tensor::<f64>::zeros(&[k, n]).unwrap();
            gemm(&a, Op::N, &b, Op::N, Some(&ledger)).unwrap();
            want += (m * k * n) as u64;
        }
        prop_assert_eq!(ledger.total_macs(), want);
        prop_assert_eq!(ledger.total_flops(), 2 * want);
    }
}
