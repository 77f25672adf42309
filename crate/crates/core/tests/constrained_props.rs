use nedb::constrained::{
    project_improved, ChannelMapping, ConstrainedKernelBank, InitScheme, Kernel, ProjectionMode, MIN_WEIGHT,
};
use nedb::tensor::{Shape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kernel() -> impl Strategy<Value = Kernel> {
    prop_oneof![Just(3usize), Just(5usize)].prop_flat_map(|k| {
        prop::collection::vec(-2.0f64..2.0, k * k).prop_map(move |w| Kernel::from_weights(k, w).unwrap())
    })
}

fn on_constraint_set(k: &Kernel) -> bool {
    k.surround().all(|w| w >= MIN_WEIGHT) && k.sum().abs() < 1e-9
}

fn max_change(a: &Kernel, b: &Kernel) -> f64 {
    a.weights().iter().zip(b.weights()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #[test]
    fn projection_lands_on_the_constraint_set(mut k in kernel()) {
        prop_assume!(k.surround().any(|w| w != 0.0));
        prop_assert!(project_improved(&mut k, false));
        prop_assert!(on_constraint_set(&k), "{k:?}");
    }

    #[test]
    fn second_projection_moves_less(k in kernel()) {
        prop_assume!(k.surround().any(|w| w != 0.0));
        let mut once = k.clone();
        project_improved(&mut once, false);
        let mut twice = once.clone();
        project_improved(&mut twice, false);
        prop_assert!(on_constraint_set(&twice));
        prop_assert!(max_change(&once, &twice) <= max_change(&k, &once));
    }

    #[test]
    fn constant_images_give_zero_residual(seed in 0u64..1000, level in 0.0f64..255.0, k in prop_oneof![Just(3usize), Just(5)]) {
        let mut bank = ConstrainedKernelBank::uniform(k, InitScheme::Random, ProjectionMode::Improved, ChannelMapping::Diagonal, seed).unwrap();
        bank.project();
        let img = Tensor::full(Shape::new(1, 3, 9, 9), level);
        let noise = bank.extract_noise(&img).unwrap();
        let r = k / 2;
        for c in 0..3 {
            for h in r..9 - r {
                for w in r..9 - r {
                    prop_assert!(noise.at(0, c, h, w).abs() < 1e-12 * level.max(1.0));
                }
            }
        }
    }
}

/// Random SGD-like perturbations followed by projection, `steps` times.
fn drift(bank: &mut ConstrainedKernelBank, rng: &mut ChaCha8Rng, steps: usize) {
    for _ in 0..steps {
        let ws: Vec<Tensor> = bank
            .weight_tensors()
            .into_iter()
            .map(|t| {
                let d = t.data().iter().map(|v| v + 0.05 * rng.gen_range(-1.0..1.0)).collect();
                Tensor::new(t.shape(), d).unwrap()
            })
            .collect();
        bank.set_weight_tensors(&ws).unwrap();
        bank.project();
    }
}

#[test]
fn same_seed_same_bank() {
    for scheme in InitScheme::ALL {
        let run = || {
            let mut bank =
                ConstrainedKernelBank::uniform(5, scheme, ProjectionMode::Improved, ChannelMapping::Dense, 9).unwrap();
            drift(&mut bank, &mut ChaCha8Rng::seed_from_u64(4), 50);
            bank
        };
        assert_eq!(run().to_text(), run().to_text());
    }
}

#[test]
fn text_round_trip_is_exact() {
    let mut bank =
        ConstrainedKernelBank::with_sizes(&[3, 5, 7], InitScheme::RandomSum, ProjectionMode::Improved, ChannelMapping::Diagonal, 2)
            .unwrap();
    drift(&mut bank, &mut ChaCha8Rng::seed_from_u64(1), 5);
    let back = ConstrainedKernelBank::from_text(&bank.to_text()).unwrap();
    assert_eq!(back, bank);
}
