use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check_gradients;
use super::tape::p_norm;
use super::*;

const H: f32 = 1e-3;
const TOL: f64 = 1e-3;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

/// Values bounded away from zero so ReLU kinks stay outside the FD stencil.
fn random_away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1f32..1.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Scalar proxy: sum(out * w) with fixed pseudo-random weights.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Result<Var, TensorError> {
    let shape = tape.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let w = tape.constant(random(&shape, &mut rng));
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn mat(rows: usize, cols: usize, v: &[f32]) -> Tensor {
    Tensor::new(vec![rows, cols], v.to_vec()).unwrap()
}

#[test]
fn matmul_identity_and_hand_case() {
    let mut t = Tape::new();
    let i = t.constant(mat(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    let a = t.constant(mat(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    let c = t.matmul(i, a).unwrap();
    assert_eq!(t.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);

    let r = t.constant(mat(1, 2, &[1.0, 2.0]));
    let col = t.constant(mat(2, 1, &[3.0, 4.0]));
    let d = t.matmul(r, col).unwrap();
    assert_eq!(t.value(d).data(), &[11.0]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::zeros(&[2, 3]));
    let b = t.constant(Tensor::zeros(&[2, 3]));
    let err = t.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("[2, 3]"), "{err}");
}

#[test]
fn matmul_gradient_matches_fd() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [random(&[3, 3], &mut rng), random(&[3, 3], &mut rng)];
        let r = check_gradients(&inputs, H, |t, v| {
            let c = t.matmul(v[0], v[1])?;
            t.sum(c)
        })
        .unwrap();
        assert!(r.max_relative_error(1e-8) < TOL, "seed {seed}: {r:?}");
    }
}

#[test]
fn conv2d_identity_and_sum() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let k1 = t.constant(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap());
    let y = t.conv2d(x, k1, 1, 0).unwrap();
    assert_eq!(t.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);

    let ones = t.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
    let s = t.conv2d(x, ones, 1, 0).unwrap();
    assert_eq!(t.value(s).shape(), &[1, 1, 1]);
    assert_eq!(t.value(s).data(), &[10.0]);
}

#[test]
fn conv2d_rejects_oversized_kernel() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::zeros(&[1, 2, 2]));
    let k = t.constant(Tensor::zeros(&[1, 1, 3, 3]));
    assert!(matches!(t.conv2d(x, k, 1, 0), Err(TensorError::Shape(_))));
    assert!(t.conv2d(x, k, 1, 1).is_ok());
}

#[test]
fn conv2d_output_extent_floors() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::zeros(&[2, 5, 6]));
    let k = t.constant(Tensor::zeros(&[3, 2, 3, 3]));
    let y = t.conv2d(x, k, 2, 1).unwrap();
    assert_eq!(t.value(y).shape(), &[3, 3, 3]);
}

#[test]
fn conv2d_gradient_matches_fd() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [random(&[1, 4, 4], &mut rng), random(&[1, 1, 3, 3], &mut rng)];
        let r = check_gradients(&inputs, H, |t, v| {
            let y = t.conv2d(v[0], v[1], 1, 0)?;
            weighted_sum(t, y, seed)
        })
        .unwrap();
        assert!(r.max_relative_error(1e-8) < TOL, "seed {seed}: {r:?}");

        // multi-channel, padded and strided
        let inputs = [random(&[2, 4, 4], &mut rng), random(&[3, 2, 3, 3], &mut rng)];
        let r = check_gradients(&inputs, H, |t, v| {
            let y = t.conv2d(v[0], v[1], 2, 1)?;
            weighted_sum(t, y, seed)
        })
        .unwrap();
        assert!(r.max_relative_error(1e-8) < TOL, "seed {seed}: {r:?}");

        // 1x1 fast path
        let inputs = [random(&[3, 4, 4], &mut rng), random(&[2, 3, 1, 1], &mut rng)];
        let r = check_gradients(&inputs, H, |t, v| {
            let y = t.conv2d(v[0], v[1], 1, 0)?;
            weighted_sum(t, y, seed)
        })
        .unwrap();
        assert!(r.max_relative_error(1e-8) < TOL, "seed {seed}: {r:?}");
    }
}

#[test]
fn elementwise_examples() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
    let r = t.relu(x).unwrap();
    assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.0]);
    let z = t.constant(Tensor::scalar(0.0));
    let s = t.sigmoid(z).unwrap();
    assert_eq!(t.value(s).item(), 0.5);

    let mut t = Tape::new();
    let x = t.leaf(Tensor::scalar(3.0));
    let sq = t.mul(x, x).unwrap();
    t.backward(sq).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[6.0]);
}

#[test]
fn relu_tie_uses_zero_subgradient() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(vec![0.0, 1.0]));
    let r = t.relu(x).unwrap();
    let s = t.sum(r).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[0.0, 1.0]);
}

#[test]
fn log_of_non_positive_is_domain_error() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::vector(vec![1.0, 0.0]));
    assert!(matches!(t.log(x), Err(TensorError::Domain(_))));
    let y = t.constant(Tensor::vector(vec![1.0, -2.0]));
    assert!(matches!(t.log(y), Err(TensorError::Domain(_))));
}

#[test]
fn binary_requires_matching_or_scalar_shapes() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::zeros(&[2, 2]));
    let b = t.constant(Tensor::zeros(&[4]));
    assert!(t.add(a, b).is_err());
    let s = t.constant(Tensor::scalar(2.0));
    let c = t.add(a, s).unwrap();
    assert_eq!(t.value(c).data(), &[2.0; 4]);
}

#[test]
fn elementwise_gradients_match_fd() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_away_from_zero(&[2, 3], &mut rng);
        let b = random_away_from_zero(&[2, 3], &mut rng);
        let s = random_away_from_zero(&[1], &mut rng);
        let pos = Tensor::new(vec![6], (0..6).map(|_| rng.random_range(0.5f32..2.0)).collect()).unwrap();

        type Build = fn(&mut Tape, &[Var]) -> Result<Var, TensorError>;
        let cases: [(&str, Vec<Tensor>, Build); 9] = [
            ("add", vec![a.clone(), b.clone()], |t, v| t.add(v[0], v[1])),
            ("sub", vec![a.clone(), b.clone()], |t, v| t.sub(v[0], v[1])),
            ("mul", vec![a.clone(), b.clone()], |t, v| t.mul(v[0], v[1])),
            ("mul-scalar", vec![a.clone(), s.clone()], |t, v| t.mul(v[0], v[1])),
            ("relu", vec![a.clone()], |t, v| t.relu(v[0])),
            ("sigmoid", vec![a.clone()], |t, v| t.sigmoid(v[0])),
            ("exp", vec![a.clone()], |t, v| t.exp(v[0])),
            ("log", vec![pos.clone()], |t, v| t.log(v[0])),
            ("scale", vec![a.clone()], |t, v| t.scale(v[0], -1.7)),
        ];
        for (name, inputs, build) in cases {
            let r = check_gradients(&inputs, H, |t, v| {
                let y = build(t, v)?;
                weighted_sum(t, y, seed)
            })
            .unwrap();
            assert!(r.max_relative_error(1e-8) < TOL, "{name} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn log_softmax_examples() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::vector(vec![0.5; 4]));
    let y = t.log_softmax(x).unwrap();
    for &v in t.value(y).data() {
        assert!((v as f64 + 4f64.ln()).abs() < 1e-6);
    }
    let x = t.constant(Tensor::vector(vec![1000.0, 0.0]));
    let y = t.log_softmax(x).unwrap();
    let out = t.value(y).data();
    assert!(out.iter().all(|v| v.is_finite()));
    assert!(out[0].abs() < 1e-6);
    assert!((out[1] + 1000.0).abs() < 1e-3);
    let empty = Tensor::new(vec![0], vec![]);
    assert!(empty.is_err());
}

#[test]
fn log_softmax_matches_f64_naive() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f32> = (0..8).map(|_| rng.random_range(-5.0f32..5.0)).collect();
        let denom: f64 = x.iter().map(|&v| (v as f64).exp()).sum();
        let out = log_softmax_values(&x);
        for (o, &v) in out.iter().zip(&x) {
            let naive = ((v as f64).exp() / denom).ln();
            assert!((*o as f64 - naive).abs() < 1e-6);
        }
        let total: f64 = out.iter().map(|&o| (o as f64).exp()).sum();
        assert!((total - 1.0).abs() < 1e-6);

        let r = check_gradients(&[Tensor::vector(x)], H, |t, v| {
            let y = t.log_softmax(v[0])?;
            weighted_sum(t, y, seed)
        })
        .unwrap();
        assert!(r.max_relative_error(1e-8) < TOL, "seed {seed}: {r:?}");
    }
}

#[test]
fn reductions_examples() {
    let mut t = Tape::new();
    let c = t.constant(Tensor::full(&[2, 4, 4], 3.25));
    let g = t.global_avg_pool(c).unwrap();
    assert_eq!(t.value(g).data(), &[3.25, 3.25]);

    let x = t.constant(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let m = t.max_pool2d(x, 2).unwrap();
    assert_eq!(t.value(m).data(), &[4.0]);

    let y = t.constant(Tensor::zeros(&[1, 3, 4]));
    assert!(matches!(t.max_pool2d(y, 2), Err(TensorError::Shape(_))));

    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]));
    let m = t.mean(x).unwrap();
    t.backward(m).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[0.25; 4]);
}

#[test]
fn max_pool_ties_route_to_first_index() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::new(vec![1, 2, 2], vec![5.0, 5.0, 5.0, 5.0]).unwrap());
    let m = t.max_pool2d(x, 2).unwrap();
    let s = t.sum(m).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn reduction_gradients_match_fd() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // distinct values so max-pool argmax is stable under the FD step
        let mut vals: Vec<f32> = (0..32).map(|i| i as f32 * 0.05).collect();
        for i in (1..vals.len()).rev() {
            vals.swap(i, rng.random_range(0..=i));
        }
        let x = Tensor::new(vec![2, 4, 4], vals).unwrap();
        type Build = fn(&mut Tape, &[Var]) -> Result<Var, TensorError>;
        let cases: [(&str, Build); 5] = [
            ("sum", |t, v| t.sum(v[0])),
            ("mean", |t, v| t.mean(v[0])),
            ("gap", |t, v| t.global_avg_pool(v[0])),
            ("maxpool", |t, v| t.max_pool2d(v[0], 2)),
            ("upsample", |t, v| t.upsample_nearest(v[0], 2)),
        ];
        for (name, build) in cases {
            let r = check_gradients(std::slice::from_ref(&x), H, |t, v| {
                let y = build(t, v)?;
                weighted_sum(t, y, seed)
            })
            .unwrap();
            assert!(r.max_relative_error(1e-8) < TOL, "{name} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn p_norm_examples() {
    let mut t = Tape::new();
    let u = t.constant(Tensor::vector(vec![3.0, 4.0]));
    let v = t.constant(Tensor::vector(vec![0.0, 0.0]));
    let d2 = t.p_norm_distance(u, v, 2.0).unwrap();
    let d1 = t.p_norm_distance(u, v, 1.0).unwrap();
    let d0 = t.p_norm_distance(u, u, 2.0).unwrap();
    assert_eq!(t.value(d2).item(), 5.0);
    assert_eq!(t.value(d1).item(), 7.0);
    assert_eq!(t.value(d0).item(), 0.0);
    assert!(matches!(t.p_norm_distance(u, v, 0.5), Err(TensorError::Parameter(_))));
}

#[test]
fn p_norm_zero_distance_has_zero_gradient() {
    let mut t = Tape::new();
    let u = t.leaf(Tensor::vector(vec![1.0, 2.0]));
    let v = t.leaf(Tensor::vector(vec![1.0, 2.0]));
    let d = t.p_norm_distance(u, v, 2.0).unwrap();
    t.backward(d).unwrap();
    assert_eq!(t.grad(u).unwrap(), &[0.0, 0.0]);
    assert_eq!(t.grad(v).unwrap(), &[0.0, 0.0]);
}

#[test]
fn p_norm_gradient_matches_fd() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in [1.0, 2.0, 3.0] {
            let inputs = [random(&[6], &mut rng), random(&[6], &mut rng)];
            let r = check_gradients(&inputs, H, |t, v| t.p_norm_distance(v[0], v[1], p)).unwrap();
            assert!(r.max_relative_error(1e-8) < TOL, "p={p} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn structural_op_gradients_match_fd() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random(&[3, 4], &mut rng);
        let r = check_gradients(std::slice::from_ref(&m), H, |t, v| {
            let row = t.row(v[0], 1)?;
            let e = t.index(row, 2)?;
            let f = t.index(row, 0)?;
            let s = t.stack(&[e, f, e])?;
            let rs = t.reshape(v[0], &[2, 6])?;
            let a = weighted_sum(t, s, seed)?;
            let b = weighted_sum(t, rs, seed + 1)?;
            t.add(a, b)
        })
        .unwrap();
        assert!(r.max_relative_error(1e-8) < TOL, "seed {seed}: {r:?}");
    }
}

#[test]
fn backward_sum_and_accumulation() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(vec![0.3, -1.0, 2.0, 4.0, 5.0]));
    let s = t.sum(x).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[1.0; 5]);

    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(vec![0.3, -1.7, 2.2]));
    let y = t.mul(x, x).unwrap();
    let y = t.sigmoid(y).unwrap();
    let s = t.sum(y).unwrap();
    t.backward(s).unwrap();
    let once = t.grad(x).unwrap().to_vec();
    t.backward(s).unwrap();
    let twice = t.grad(x).unwrap();
    for (a, b) in once.iter().zip(twice) {
        assert_eq!(2.0 * a, *b);
    }
}

#[test]
fn backward_rejects_non_scalar_root() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
    let y = t.relu(x).unwrap();
    assert!(matches!(t.backward(y), Err(TensorError::Contract(_))));
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
    let c = t.constant(Tensor::vector(vec![3.0, 4.0]));
    let y = t.mul(x, c).unwrap();
    let s = t.sum(y).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[3.0, 4.0]);
    assert!(t.grad(c).is_none());
}

#[test]
fn forward_is_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = Tape::new();
        let x = t.constant(random(&[2, 8, 8], &mut rng));
        let k = t.leaf(random(&[4, 2, 3, 3], &mut rng));
        let y = t.conv2d(x, k, 1, 1).unwrap();
        let y = t.relu(y).unwrap();
        let y = t.max_pool2d(y, 2).unwrap();
        let g = t.global_avg_pool(y).unwrap();
        t.value(g).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn log_softmax_normalizes(x in prop::collection::vec(-50.0f32..50.0, 1..20)) {
            let out = log_softmax_values(&x);
            let total: f64 = out.iter().map(|&o| (o as f64).exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
        }

        #[test]
        fn p_norm_is_a_metric(
            a in prop::collection::vec(-10.0f32..10.0, 5),
            b in prop::collection::vec(-10.0f32..10.0, 5),
            c in prop::collection::vec(-10.0f32..10.0, 5),
            p in prop::sample::select(vec![1.0f64, 2.0]),
        ) {
            let d = |x: &[f32], y: &[f32]| p_norm(x.iter().zip(y).map(|(&s, &t)| s as f64 - t as f64), p);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
            prop_assert!(d(&a, &b) >= 0.0);
        }
    }
}
