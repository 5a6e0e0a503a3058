//! Randomised-shape gradient checks over composed graphs and forward
//! determinism.

use fcdd_autodiff::{finite_difference_check, NormMode, RunningStats, Tape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn composed_block_gradients(
        n in 1usize..3, cin in 1usize..3, cout in 1usize..4,
        half_h in 2usize..4, half_w in 2usize..4, seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (2 * half_h, 2 * half_w);
        let x = random(&[n, cin, h, w], &mut rng);
        let k = random(&[cout, cin, 3, 3], &mut rng);
        let g = random(&[cout], &mut rng);
        let b = random(&[cout], &mut rng);
        let report = finite_difference_check(
            |t, v| {
                let y = t.conv2d(v[0], v[1], None, 1, 1)?;
                let mut stats = RunningStats::new(cout);
                let y = t.batch_norm(y, v[2], v[3], &mut stats, NormMode::Train)?;
                let y = t.relu(y)?;
                let y = t.max_pool2(y)?;
                t.upsample_bilinear(y, h, w)
            },
            &[x, k, g, b],
        ).unwrap();
        prop_assert!(report.passed(1e-4), "{:?}", report);
    }

    #[test]
    fn forward_is_deterministic(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[3, 2, 8, 8], &mut rng).cast::<f32>();
        let k = random(&[4, 2, 3, 3], &mut rng).cast::<f32>();
        let run = || {
            let mut t = Tape::new();
            let xv = t.input(x.clone());
            let kv = t.input(k.clone());
            let y = t.conv2d(xv, kv, None, 1, 1).unwrap();
            let y = t.max_pool2(y).unwrap();
            t.value(y).clone()
        };
        let a = run();
        let b = run();
        prop_assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
