use fcdd_autodiff::{
    finite_difference_check, NormMode, Parameter, RunningStats, Tape, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn conv_sum_of_ones() {
    let mut tape = Tape::<f32>::new();
    let x = tape.input(Tensor::full(vec![1, 1, 3, 3], 1.0));
    let w = tape.input(Tensor::full(vec![1, 1, 3, 3], 1.0));
    let y = tape.conv2d(x, w, None, 1, 0).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 1, 1, 1]);
    assert_eq!(tape.value(y).data(), &[9.0]);
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let input = random(&[2, 1, 5, 6], &mut rng);
    let mut tape = Tape::new();
    let x = tape.input(input.clone());
    let w = tape.input(Tensor::full(vec![1, 1, 1, 1], 1.0));
    let y = tape.conv2d(x, w, None, 1, 0).unwrap();
    assert_eq!(tape.value(y), &input);
}

#[test]
fn conv_output_extent_formula() {
    let mut tape = Tape::<f32>::new();
    let x = tape.input(Tensor::zeros(vec![1, 2, 9, 7]));
    let w = tape.input(Tensor::zeros(vec![3, 2, 3, 3]));
    let y = tape.conv2d(x, w, None, 2, 1).unwrap();
    // floor((9 + 2 - 3) / 2) + 1 = 5, floor((7 + 2 - 3) / 2) + 1 = 4
    assert_eq!(tape.value(y).shape(), &[1, 3, 5, 4]);
}

#[test]
fn conv_channel_mismatch_is_shape_error() {
    let mut tape = Tape::<f32>::new();
    let x = tape.input(Tensor::zeros(vec![1, 2, 4, 4]));
    let w = tape.input(Tensor::zeros(vec![1, 3, 3, 3]));
    assert!(tape.conv2d(x, w, None, 1, 1).is_err());
}

#[test]
fn conv_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&[2, 3, 5, 5], &mut rng);
    let w = random(&[4, 3, 3, 3], &mut rng);
    let b = random(&[4], &mut rng);
    for (stride, pad) in [(1, 0), (1, 1), (2, 1)] {
        let report = finite_difference_check(
            |t, v| t.conv2d(v[0], v[1], Some(v[2]), stride, pad),
            &[x.clone(), w.clone(), b.clone()],
        )
        .unwrap();
        assert!(report.passed(1e-4), "stride {stride} pad {pad}: {report:?}");
    }
}

#[test]
fn batch_norm_constant_channel_gives_beta() {
    let mut tape = Tape::<f64>::new();
    let x = tape.input(Tensor::full(vec![3, 2, 2, 2], 4.2));
    let g = tape.input(Tensor::new(vec![2], vec![1.5, -0.5]).unwrap());
    let b = tape.input(Tensor::new(vec![2], vec![0.25, -3.0]).unwrap());
    let mut stats = RunningStats::new(2);
    let y = tape.batch_norm(x, g, b, &mut stats, NormMode::Train).unwrap();
    let out = tape.value(y);
    for n in 0..3 {
        assert!((out.at4(n, 0, 1, 1) - 0.25).abs() < 1e-9);
        assert!((out.at4(n, 1, 0, 1) + 3.0).abs() < 1e-9);
    }
}

#[test]
fn batch_norm_standardized_batch_is_near_identity() {
    // Per channel values ±1 in equal numbers: mean 0, biased variance 1.
    let input = Tensor::from_fn(vec![2, 3, 2, 2], |i| if i % 2 == 0 { 1.0 } else { -1.0 });
    let mut tape = Tape::<f64>::new();
    let x = tape.input(input.clone());
    let g = tape.input(Tensor::full(vec![3], 1.0));
    let b = tape.input(Tensor::zeros(vec![3]));
    let mut stats = RunningStats::new(3);
    let y = tape.batch_norm(x, g, b, &mut stats, NormMode::Train).unwrap();
    assert!(close(tape.value(y).data(), input.data(), 1e-5));
}

#[test]
fn batch_norm_updates_running_stats() {
    let input = Tensor::from_fn(vec![2, 1, 1, 2], |i| i as f64); // 0,1,2,3
    let mut tape = Tape::<f64>::new();
    let x = tape.input(input);
    let g = tape.input(Tensor::full(vec![1], 1.0));
    let b = tape.input(Tensor::zeros(vec![1]));
    let mut stats = RunningStats::new(1);
    tape.batch_norm(x, g, b, &mut stats, NormMode::Train).unwrap();
    // mean 1.5, unbiased variance 5/3
    assert!((stats.mean[0] - 0.15).abs() < 1e-12);
    assert!((stats.var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);

    let before = stats.clone();
    let x = tape.input(Tensor::full(vec![1, 1, 1, 1], 10.0));
    let y = tape.batch_norm(x, g, b, &mut stats, NormMode::Eval).unwrap();
    assert_eq!(stats, before);
    let expected = (10.0 - 0.15) / (before.var[0] + 1e-5f64).sqrt();
    assert!((tape.value(y).data()[0] - expected).abs() < 1e-12);
}

#[test]
fn batch_norm_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(&[2, 2, 4, 4], &mut rng);
    let g = random(&[2], &mut rng);
    let b = random(&[2], &mut rng);
    for mode in [NormMode::Train, NormMode::Eval] {
        let report = finite_difference_check(
            |t, v| {
                let mut stats = RunningStats {
                    mean: vec![0.1, -0.2],
                    var: vec![0.8, 1.3],
                    ..RunningStats::new(2)
                };
                t.batch_norm(v[0], v[1], v[2], &mut stats, mode)
            },
            &[x.clone(), g.clone(), b.clone()],
        )
        .unwrap();
        assert!(report.passed(1e-4), "{mode:?}: {report:?}");
    }
}

#[test]
fn batch_norm_gamma_length_checked() {
    let mut tape = Tape::<f64>::new();
    let x = tape.input(Tensor::zeros(vec![1, 2, 2, 2]));
    let g = tape.input(Tensor::zeros(vec![3]));
    let b = tape.input(Tensor::zeros(vec![2]));
    let mut stats = RunningStats::new(2);
    assert!(tape
        .batch_norm(x, g, b, &mut stats, NormMode::Train)
        .is_err());
}

#[test]
fn relu_values() {
    let mut tape = Tape::<f32>::new();
    let x = tape.input(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
    let y = tape.relu(x).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn relu_gradient_away_from_kink() {
    let x = Tensor::new(vec![1, 1, 2, 2], vec![-2.0, 1.5, 3.0, -0.7]).unwrap();
    let report = finite_difference_check(|t, v| t.relu(v[0]), &[x]).unwrap();
    assert!(report.passed(1e-6), "{report:?}");
}

#[test]
fn max_pool_picks_maximum() {
    let mut tape = Tape::<f32>::new();
    let x = tape.input(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = tape.max_pool2(x).unwrap();
    assert_eq!(tape.value(y).data(), &[4.0]);
}

#[test]
fn max_pool_tie_routes_to_first() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::full(vec![1, 1, 2, 2], 1.0), true);
    let y = tape.max_pool2(x).unwrap();
    let s = tape.sum(y).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn max_pool_gradient_distinct_values() {
    // A permutation of distinct values spaced far apart relative to the FD step.
    let n = 2 * 3 * 6 * 4;
    let x = Tensor::from_fn(vec![2, 3, 6, 4], |i| ((i * 37) % n) as f64 * 0.1 - 5.0);
    let report = finite_difference_check(|t, v| t.max_pool2(v[0]), &[x]).unwrap();
    assert!(report.passed(1e-4), "{report:?}");
}

#[test]
fn upsample_constant_map() {
    let mut tape = Tape::<f64>::new();
    let x = tape.input(Tensor::full(vec![1, 2, 3, 5], 0.75));
    let y = tape.upsample_bilinear(x, 12, 13).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 2, 12, 13]);
    assert!(tape.value(y).data().iter().all(|&v| (v - 0.75).abs() < 1e-15));
}

#[test]
fn upsample_single_pixel() {
    let mut tape = Tape::<f64>::new();
    let x = tape.input(Tensor::full(vec![1, 1, 1, 1], -2.5));
    let y = tape.upsample_bilinear(x, 4, 4).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == -2.5));
}

#[test]
fn upsample_two_by_two_hand_computed() {
    // Half-pixel centres: output coordinate o maps to source (o + 0.5)/2 - 0.5,
    // clamped at 0, giving 1-d weights [1,0], [.75,.25], [.25,.75], [0,1].
    let mut tape = Tape::<f64>::new();
    let x = tape.input(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = tape.upsample_bilinear(x, 4, 4).unwrap();
    let expected = [
        1.0, 1.25, 1.75, 2.0, //
        1.5, 1.75, 2.25, 2.5, //
        2.5, 2.75, 3.25, 3.5, //
        3.0, 3.25, 3.75, 4.0,
    ];
    assert!(close(tape.value(y).data(), &expected, 1e-6));
}

#[test]
fn upsample_rejects_shrinking() {
    let mut tape = Tape::<f64>::new();
    let x = tape.input(Tensor::zeros(vec![1, 1, 4, 4]));
    assert!(tape.upsample_bilinear(x, 2, 8).is_err());
}

#[test]
fn upsample_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[2, 2, 3, 4], &mut rng);
    let report = finite_difference_check(|t, v| t.upsample_bilinear(v[0], 7, 10), &[x]).unwrap();
    assert!(report.passed(1e-4), "{report:?}");
}

#[test]
fn linear_op_gradient_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[3, 4], &mut rng);
    let y = random(&[3, 4], &mut rng);
    let report = finite_difference_check(
        |t, v| {
            let s = t.scale(v[0], 2.5)?;
            t.add(s, v[1])
        },
        &[x, y],
    )
    .unwrap();
    assert!(report.worst() < 1e-9, "{report:?}");
}

#[test]
fn non_finite_forward_is_numeric_error() {
    let mut tape = Tape::<f32>::new();
    let x = tape.input(Tensor::new(vec![1, 1, 1, 2], vec![f32::MAX, f32::MAX]).unwrap());
    let w = tape.input(Tensor::full(vec![1, 1, 1, 2], 2.0));
    let err = tape.conv2d(x, w, None, 1, 0).unwrap_err();
    assert!(err.to_string().contains("non-finite"));
}

#[test]
fn backward_twice_doubles_parameter_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut w = Parameter::new("w", random(&[2, 1, 3, 3], &mut rng));
    let mut tape = Tape::new();
    let x = tape.input(random(&[1, 1, 4, 4], &mut rng));
    let wv = tape.param(&w);
    let y = tape.conv2d(x, wv, None, 1, 1).unwrap();
    let s = tape.sum(y).unwrap();
    let g = tape.backward(s).unwrap();
    w.accumulate(&g);
    let once = w.grad.clone();
    let g = tape.backward(s).unwrap();
    w.accumulate(&g);
    assert!(w.grad.iter().zip(&once).all(|(a, b)| *a == 2.0 * b));
}

#[test]
fn frozen_parameter_gets_no_gradient() {
    let mut w = Parameter::new("w", Tensor::full(vec![1, 1, 1, 1], 2.0)).frozen();
    let mut tape = Tape::new();
    let x = tape.input(Tensor::full(vec![1, 1, 2, 2], 1.0f64));
    let wv = tape.param(&w);
    let y = tape.conv2d(x, wv, None, 1, 0).unwrap();
    let s = tape.sum(y).unwrap();
    let g = tape.backward(s).unwrap();
    w.accumulate(&g);
    assert!(w.grad.iter().all(|&v| v == 0.0));
}

#[test]
fn backward_requires_scalar() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(vec![2]), true);
    assert!(tape.backward(x).is_err());
}
