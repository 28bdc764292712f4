use agentnet_autodiff::suite::{op_cases, random_input as random, standard_gumbel as gumbel, weighted};
use agentnet_autodiff::{grad_check, Input, Tape, TensorError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn every_op_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, shapes, op) in op_cases() {
            let inputs: Vec<Input> = shapes.iter().map(|&(r, c)| random(&mut rng, r, c)).collect();
            let report = grad_check(|t, v| { let o = op(t, v)?; weighted(t, o, seed) }, &inputs, 1e-3).unwrap();
            prop_assert!(report.max_rel_error < 1e-6, "{name}: {}", report.max_rel_error);
            prop_assert!(report.checked > 0, "{name}");
        }
    }

    #[test]
    /// Multilinear in each coordinate, so a wide step has no truncation error.
    fn matmul_chain_is_tight(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![random(&mut rng, 3, 4), random(&mut rng, 4, 4), random(&mut rng, 4, 2)];
        let report = grad_check(|t, v| {
            let x = t.matmul(v[0], v[1])?;
            let x = t.matmul(x, v[2])?;
            weighted(t, x, seed)
        }, &inputs, 1e-2).unwrap();
        prop_assert!(report.max_rel_error < 1e-7, "{}", report.max_rel_error);
    }

    #[test]
    fn subtracting_group_means_gives_zero_mean_groups(seed in any::<u64>(), groups in 1usize..6, rows in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seg: Vec<usize> = (0..rows).map(|i| if i < groups { i } else { rng.gen_range(0..groups) }).collect();
        prop_assume!(rows >= groups);
        let mut t = Tape::new();
        let x = t.leaf((0..rows * 3).map(|_| rng.gen_range(-100.0..100.0)).collect(), rows, 3).unwrap();
        let m = t.segment_mean(x, &seg, groups).unwrap();
        let b = t.gather(m, &seg).unwrap();
        let c = t.sub(x, b).unwrap();
        let centered = t.segment_sum(c, &seg, groups).unwrap();
        for &v in t.value(centered).iter() {
            let v: f64 = v;
            prop_assert!(v.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn gumbel_forward_is_one_hot(seed in any::<u64>(), m in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..500 {
            let mut t = Tape::new();
            let z = t.leaf((0..m).map(|_| rng.gen_range(-3.0..3.0)).collect(), m, 1).unwrap();
            let noise: Vec<f64> = (0..m).map(|_| gumbel(&mut rng)).collect();
            let y = t.gumbel_softmax_st(z, &vec![0; m], 1, &noise, 2.0 / 3.0, true).unwrap();
            let v = t.value(y);
            prop_assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 1);
            prop_assert_eq!(v.iter().filter(|&&x| x == 0.0).count(), m - 1);
        }
    }
}

#[test]
fn dominant_logit_wins() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut wins = 0;
    for _ in 0..1000 {
        let mut t = Tape::new();
        let z = t.leaf(vec![1000.0, 0.0, 0.0], 3, 1).unwrap();
        let noise: Vec<f64> = (0..3).map(|_| gumbel(&mut rng)).collect();
        let y = t.gumbel_softmax_st(z, &[0, 0, 0], 1, &noise, 2.0 / 3.0, true).unwrap();
        wins += usize::from(t.value(y)[0] == 1.0);
    }
    assert!(wins >= 999);
}

#[test]
fn straight_through_backward_is_softmax_jacobian() {
    let noise = [0.1, -0.4, 0.9, 0.2];
    let z = [0.5, 1.5, -0.3, 0.0];
    let dy = [1.0, -2.0, 0.5, 3.0];
    let tau = 0.5;
    let mut t = Tape::new();
    let zv = t.leaf(z.to_vec(), 4, 1).unwrap();
    let y = t.gumbel_softmax_st(zv, &[0; 4], 1, &noise, tau, true).unwrap();
    let w = t.constant(dy.to_vec(), 4, 1).unwrap();
    let p = t.mul(y, w).unwrap();
    let loss = t.sum(p).unwrap();
    let grads = t.backward(loss).unwrap();
    let soft = |z: &[f64]| {
        let e: Vec<f64> = z.iter().zip(&noise).map(|(a, b)| ((a + b) / tau).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let f = |z: &[f64]| soft(z).iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>();
    for i in 0..4 {
        let (mut zp, mut zm) = (z, z);
        zp[i] += 1e-6;
        zm[i] -= 1e-6;
        let fd = (f(&zp) - f(&zm)) / 2e-6;
        assert!((grads.get(zv).unwrap()[i] - fd).abs() < 1e-7);
    }
    assert_eq!(t.value(y).iter().sum::<f64>(), 1.0);
}

#[test]
fn kinks_are_reported_not_failed() {
    let inputs = vec![Input::new(vec![0.0, 1.0, -1.0], 3, 1)];
    let report = grad_check(|t, v| {
        let y = t.leaky_relu(v[0], 0.01)?;
        t.sum(y)
    }, &inputs, 1e-4)
    .unwrap();
    assert_eq!(report.excluded, vec![(0, 0)]);
    assert_eq!(report.checked, 2);
    assert!(report.max_rel_error < 1e-8);
}

#[test]
fn documented_values() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(vec![-1.0], 1, 1).unwrap();
    let y = t.leaky_relu(x, 0.01).unwrap();
    assert!((t.value(y)[0] + 0.01).abs() < 1e-15);

    let x = t.leaf(vec![3.0; 4], 1, 4).unwrap();
    let g = t.constant(vec![1.0; 4], 1, 4).unwrap();
    let b = t.constant(vec![0.0; 4], 1, 4).unwrap();
    let y = t.layer_norm(x, g, b).unwrap();
    assert!(t.value(y).iter().all(|&v| v == 0.0));

    let x = t.leaf(vec![0.0; 3], 1, 3).unwrap();
    let y = t.softmax(x).unwrap();
    assert!(t.value(y).iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

    let x = t.leaf(vec![2.0, -1.0, 2.0, -1.0, 5.0, 0.5], 3, 2).unwrap();
    let y = t.log_scaled_sum(x, &[0, 0, 1], 2).unwrap();
    let l3 = 3f64.ln();
    let l2 = 2f64.ln();
    let want = [2.0 * l3, -l3, 5.0 * l2, 0.5 * l2];
    for (a, b) in t.value(y).iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn errors_surface() {
    let mut t = Tape::<f64>::new();
    let a = t.leaf(vec![0.0; 6], 2, 3).unwrap();
    let b = t.leaf(vec![0.0; 6], 3, 2).unwrap();
    assert!(matches!(t.add(a, b), Err(TensorError::ShapeMismatch { .. })));
    assert!(matches!(t.matmul(a, a), Err(TensorError::ShapeMismatch { .. })));
    assert!(matches!(t.segment_sum(a, &[0, 5], 2), Err(TensorError::GroupOutOfRange { group: 5, .. })));
    assert!(matches!(t.log_scaled_sum(a, &[0, 0], 2), Err(TensorError::EmptyGroup { group: 1, .. })));
    let z = t.leaf(vec![f64::NAN, 0.0], 2, 1).unwrap();
    assert!(matches!(
        t.gumbel_softmax_st(z, &[0, 0], 1, &[0.0, 0.0], 1.0, true),
        Err(TensorError::NonFinite { .. })
    ));
    assert!(matches!(t.gather(a, &[2]), Err(TensorError::IndexOutOfRange { .. })));
}

#[test]
fn segment_max_breaks_ties_toward_first_row() {
    let mut t = Tape::<f64>::new();
    let x = t.leaf(vec![1.0, 4.0, 1.0, 2.0], 4, 1).unwrap();
    let m = t.segment_max(x, &[0, 1, 0, 1], 3).unwrap();
    assert_eq!(t.value(m), &[1.0, 4.0, 0.0]);
    let s = t.sum(m).unwrap();
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap(), &[1.0, 1.0, 0.0, 0.0]);
}
