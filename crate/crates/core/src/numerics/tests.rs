use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn t64(shape: &[usize], values: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), values.to_vec()).unwrap()
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-2.0..2.0))
}

/// Central finite differences over every parameter element, compared to the
/// tape gradient. Returns the largest relative error seen.
fn max_grad_error(
    params: &[Tensor<f64>],
    build: &dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
) -> f64 {
    const STEP: f64 = 1e-5;
    let loss_at = |ps: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone()).unwrap()).collect();
        let loss = build(&mut g, &vars).unwrap();
        g.value(loss).item().unwrap()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone()).unwrap()).collect();
    let loss = build(&mut g, &vars).unwrap();
    let grads = g.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (pi, p) in params.iter().enumerate() {
        let analytic = grads.get(vars[pi]).unwrap();
        assert_eq!(analytic.shape(), p.shape());
        for e in 0..p.len() {
            let mut plus = params.to_vec();
            plus[pi].data_mut()[e] += STEP;
            let mut minus = params.to_vec();
            minus[pi].data_mut()[e] -= STEP;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * STEP);
            let a = analytic.data()[e];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

/// Reduce an arbitrary-shape output to a scalar with fixed random weights so
/// that every output element contributes a distinct gradient.
fn project(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = uniform(&mut rng, g.value(out).shape());
    let w = g.input(w)?;
    let prod = g.mul(out, w)?;
    g.sum(prod)
}

#[test]
fn matmul_examples() {
    let a = t64(&[3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 10.]);
    let eye = t64(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
    assert_eq!(matmul(&eye, &a).unwrap(), a);

    let lhs = t64(&[2, 2], &[1., 2., 3., 4.]);
    let rhs = t64(&[2, 1], &[0., 1.]);
    assert_eq!(matmul(&lhs, &rhs).unwrap(), t64(&[2, 1], &[2., 4.]));

    let bad = t64(&[2, 3], &[0.; 6]);
    match matmul(&bad, &bad) {
        Err(TensorError::Shape { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn batched_matmul_matches_per_slice_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = uniform(&mut rng, &[2, 3, 4, 5]);
    let b = uniform(&mut rng, &[2, 3, 5, 2]);
    let c = matmul(&a, &b).unwrap();
    assert_eq!(c.shape(), &[2, 3, 4, 2]);
    for batch in 0..6 {
        for i in 0..4 {
            for j in 0..2 {
                let expected: f64 = (0..5)
                    .map(|k| a.data()[batch * 20 + i * 5 + k] * b.data()[batch * 10 + k * 2 + j])
                    .sum();
                assert!((c.data()[batch * 8 + i * 2 + j] - expected).abs() < 1e-12);
            }
        }
    }
    // a shared rank-2 right operand broadcasts over leading dimensions
    let w = uniform(&mut rng, &[5, 3]);
    let shared = matmul(&a, &w).unwrap();
    assert_eq!(shared.shape(), &[2, 3, 4, 3]);
    let mismatched = uniform(&mut rng, &[3, 2, 5, 2]);
    assert!(matmul(&a, &mismatched).is_err());
}

#[test]
fn softmax_examples() {
    let s = softmax(&t64(&[4], &[1., 1., 1., 1.]), 0).unwrap();
    assert!(s.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));

    let s = softmax(&t64(&[2], &[0., 3f64.ln()]), 0).unwrap();
    assert!((s.data()[0] - 0.25).abs() < 1e-15 && (s.data()[1] - 0.75).abs() < 1e-15);

    let s = softmax(&Tensor::<f32>::new(vec![2], vec![1000., 0.]).unwrap(), 0).unwrap();
    assert!((s.data()[0] - 1.0).abs() < 1e-6 && s.data()[1] < 1e-6);

    assert!(softmax(&Tensor::<f64>::scalar(1.0), 0).is_err());
    assert!(softmax(&t64(&[2], &[0., 1.]), 1).is_err());
}

#[test]
fn softmax_over_leading_axis() {
    let x = t64(&[2, 2], &[0., 5., 3f64.ln(), 5.]);
    let s = softmax(&x, 0).unwrap();
    assert!((s.data()[0] - 0.25).abs() < 1e-15);
    assert!((s.data()[2] - 0.75).abs() < 1e-15);
    assert!((s.data()[1] - 0.5).abs() < 1e-15);
}

#[test]
fn layer_norm_examples() {
    let ones = t64(&[4], &[1.; 4]);
    let zeros = t64(&[4], &[0.; 4]);
    let constant = t64(&[4], &[3.; 4]);
    let y = layer_norm(&constant, &ones, &zeros, 1e-5).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));

    let pair = t64(&[2], &[1., -1.]);
    let y = layer_norm(&pair, &t64(&[2], &[1., 1.]), &t64(&[2], &[0., 0.]), 1e-15).unwrap();
    assert!((y.data()[0] - 1.0).abs() < 1e-12 && (y.data()[1] + 1.0).abs() < 1e-12);

    let x = t64(&[4], &[0.3, -2., 5., 1.]);
    let y = layer_norm(&x, &zeros, &t64(&[4], &[7.; 4]), 1e-5).unwrap();
    assert!(y.data().iter().all(|&v| v == 7.0));

    assert!(layer_norm(&x, &ones, &zeros, 0.0).is_err());
    assert!(layer_norm(&x, &ones, &zeros, -1.0).is_err());
    assert!(layer_norm(&x, &t64(&[3], &[1.; 3]), &zeros, 1e-5).is_err());
}

#[test]
fn gelu_examples() {
    let y = gelu(&t64(&[3], &[0., 10., -10.]));
    assert_eq!(y.data()[0], 0.0);
    assert!((y.data()[1] - 10.0).abs() < 1e-6);
    assert!(y.data()[2].abs() < 1e-6);
    let y32 = gelu(&Tensor::<f32>::new(vec![2], vec![10., -10.]).unwrap());
    assert!((y32.data()[0] - 10.0).abs() < 1e-6 && y32.data()[1].abs() < 1e-6);
}

#[test]
fn permute_and_inverse() {
    let x = Tensor::<f64>::from_fn(vec![2, 3, 4], |i| i as f64);
    let p = permute(&x, &[2, 0, 1]).unwrap();
    assert_eq!(p.shape(), &[4, 2, 3]);
    for a in 0..2 {
        for b in 0..3 {
            for c in 0..4 {
                assert_eq!(p.at(&[c, a, b]), x.at(&[a, b, c]));
            }
        }
    }
    let back = permute(&p, &ops::inverse_permutation(&[2, 0, 1])).unwrap();
    assert_eq!(back, x);
    assert!(permute(&x, &[0, 0, 1]).is_err());
}

#[test]
fn backward_examples() {
    let mut g = Graph::<f64>::new();
    let w = g.param(t64(&[3], &[0.5, -1., 2.])).unwrap();
    let loss = g.sum(w).unwrap();
    assert_eq!(g.backward(loss).unwrap().get(w).unwrap().data(), &[1., 1., 1.]);

    let mut g = Graph::<f64>::new();
    let w = g.param(t64(&[2], &[1., 2.])).unwrap();
    let sq = g.mul(w, w).unwrap();
    let loss = g.sum(sq).unwrap();
    assert_eq!(g.backward(loss).unwrap().get(w).unwrap().data(), &[2., 4.]);
}

#[test]
fn backward_rejects_non_scalar_and_zero_fills_unused_params() {
    let mut g = Graph::<f64>::new();
    let w = g.param(t64(&[2], &[1., 2.])).unwrap();
    let unused = g.param(t64(&[2, 2], &[1.; 4])).unwrap();
    assert!(matches!(g.backward(w), Err(TensorError::NotScalar { .. })));
    let loss = g.sum(w).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(unused).unwrap(), &Tensor::zeros(vec![2, 2]));
    assert_eq!(grads.len(), 2);
}

#[test]
fn gradients_accumulate_across_reuse() {
    // loss = sum(w) + sum(3w) uses w twice; d/dw = 4
    let mut g = Graph::<f64>::new();
    let w = g.param(t64(&[2], &[0.1, 0.2])).unwrap();
    let s1 = g.sum(w).unwrap();
    let w3 = g.scale(w, 3.0).unwrap();
    let s2 = g.sum(w3).unwrap();
    let loss = g.add(s1, s2).unwrap();
    assert_eq!(g.backward(loss).unwrap().get(w).unwrap().data(), &[4., 4.]);
}

#[test]
fn non_finite_values_fail_loudly() {
    let mut g = Graph::<f64>::new();
    assert!(matches!(g.param(t64(&[1], &[f64::NAN])), Err(TensorError::NonFinite { .. })));
    let big = g.param(t64(&[1], &[1e308])).unwrap();
    assert!(matches!(g.scale(big, 10.0), Err(TensorError::NonFinite { .. })));
    let x = Tensor::<f32>::new(vec![1], vec![3e38]).unwrap();
    assert!(matches!(add(&x, &x), Err(TensorError::NonFinite { .. })));
}

#[test]
fn tensor_construction_invariants() {
    assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
    assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
    let t = Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).unwrap();
    assert!(t.reshape(vec![4]).is_err());
    assert_eq!(t.reshape(vec![3, 2]).unwrap().shape(), &[3, 2]);
}

type Builder = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>>;

fn op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, Builder)> {
    vec![
        ("add", vec![vec![2, 3], vec![2, 3]], Box::new(|g, v| { let o = g.add(v[0], v[1])?; project(g, o, 1) })),
        ("add_broadcast", vec![vec![2, 3, 4], vec![3, 4]], Box::new(|g, v| { let o = g.add_broadcast(v[0], v[1])?; project(g, o, 2) })),
        ("mul", vec![vec![3, 2], vec![3, 2]], Box::new(|g, v| { let o = g.mul(v[0], v[1])?; project(g, o, 3) })),
        ("scale", vec![vec![5]], Box::new(|g, v| { let o = g.scale(v[0], -1.7)?; project(g, o, 4) })),
        ("matmul", vec![vec![3, 4], vec![4, 2]], Box::new(|g, v| { let o = g.matmul(v[0], v[1])?; project(g, o, 5) })),
        ("matmul_shared", vec![vec![2, 3, 4], vec![4, 2]], Box::new(|g, v| { let o = g.matmul(v[0], v[1])?; project(g, o, 6) })),
        ("matmul_batched", vec![vec![2, 3, 4], vec![2, 4, 2]], Box::new(|g, v| { let o = g.matmul(v[0], v[1])?; project(g, o, 7) })),
        ("reshape", vec![vec![2, 6]], Box::new(|g, v| { let o = g.reshape(v[0], &[3, 4])?; project(g, o, 8) })),
        ("permute", vec![vec![2, 3, 4]], Box::new(|g, v| { let o = g.permute(v[0], &[1, 2, 0])?; project(g, o, 9) })),
        ("concat", vec![vec![2, 1, 3], vec![2, 4, 3]], Box::new(|g, v| { let o = g.concat(&[v[0], v[1]], 1)?; project(g, o, 10) })),
        ("narrow", vec![vec![2, 5, 3]], Box::new(|g, v| { let o = g.narrow(v[0], 1, 1, 3)?; project(g, o, 11) })),
        ("repeat", vec![vec![1, 3]], Box::new(|g, v| { let o = g.repeat(v[0], 4)?; project(g, o, 12) })),
        ("softmax", vec![vec![3, 5]], Box::new(|g, v| { let o = g.softmax(v[0])?; project(g, o, 13) })),
        ("log_softmax", vec![vec![3, 5]], Box::new(|g, v| { let o = g.log_softmax(v[0])?; project(g, o, 14) })),
        ("layer_norm", vec![vec![3, 6], vec![6], vec![6]], Box::new(|g, v| { let o = g.layer_norm(v[0], v[1], v[2], 1e-5)?; project(g, o, 15) })),
        ("gelu", vec![vec![4, 3]], Box::new(|g, v| { let o = g.gelu(v[0])?; project(g, o, 16) })),
        ("mean", vec![vec![4, 3]], Box::new(|g, v| { let sq = g.mul(v[0], v[0])?; g.mean(sq) })),
        ("nll", vec![vec![3, 4]], Box::new(|g, v| { let lp = g.log_softmax(v[0])?; g.nll(lp, &[2, 0, 3]) })),
        ("clamped_log", vec![vec![3, 4]], Box::new(|g, v| { let p = g.softmax(v[0])?; let l = g.clamped_log(p, 1e-12)?; project(g, l, 17) })),
    ]
}

#[test]
fn every_op_matches_central_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (name, shapes, build) in op_cases() {
        let params: Vec<Tensor<f64>> = shapes.iter().map(|s| uniform(&mut rng, s)).collect();
        let err = max_grad_error(&params, build.as_ref());
        assert!(err < 1e-4, "{name}: max relative error {err:e}");
    }
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(xs in prop::collection::vec(-20.0f64..20.0, 1..12), c in -50.0f64..50.0) {
        let x = Tensor::new(vec![xs.len()], xs.clone()).unwrap();
        let shifted = x.map(|v| v + c);
        let a = softmax(&x, 0).unwrap();
        let b = softmax(&shifted, 0).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
        prop_assert!((a.sum() - 1.0).abs() < 1e-12);
        prop_assert!(a.data().iter().all(|&p| p > 0.0 && p <= 1.0));
    }

    #[test]
    fn matmul_is_associative_on_small_integers(
        a in prop::collection::vec(-5i32..5, 6),
        b in prop::collection::vec(-5i32..5, 12),
        c in prop::collection::vec(-5i32..5, 8),
    ) {
        let to = |shape: [usize; 2], v: &[i32]| Tensor::<f64>::new(shape.to_vec(), v.iter().map(|&x| x as f64).collect()).unwrap();
        let (a, b, c) = (to([2, 3], &a), to([3, 4], &b), to([4, 2], &c));
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn layer_norm_standardizes_non_constant_rows(xs in prop::collection::vec(-2.0f64..2.0, 8..32)) {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        prop_assume!(var > 1e-2);
        let x = Tensor::new(vec![n], xs).unwrap();
        let y = layer_norm(&x, &Tensor::ones(vec![n]), &Tensor::zeros(vec![n]), 1e-12).unwrap();
        let m = y.sum() / n as f64;
        let v = y.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
        prop_assert!(m.abs() < 1e-6);
        prop_assert!((v - 1.0).abs() < 1e-5);
    }
}
