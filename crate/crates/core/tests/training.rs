use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssi3d::data::{ExampleSource, InMemoryExamples, Split};
use ssi3d::metrics::evaluate;
use ssi3d::model::{Model, ModelSpec, Scale, TemporalMode, N_TARGETS};
use ssi3d::train::{mse_loss_and_grad, train, train_step, TrainConfig};
use ssi3d::{Scalar, Tensor};

fn tiny_spec(which: u8) -> ModelSpec {
    match which % 3 {
        0 => ModelSpec::fcn(Scale::Tiny),
        1 => ModelSpec::cnn2d(Scale::Tiny),
        _ => ModelSpec::cnn3d(Scale::Tiny, 1, TemporalMode::Sampled).unwrap(),
    }
}

fn examples<T: Scalar>(spec: &ModelSpec, n: usize, seed: u64) -> InMemoryExamples<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [t, h, w, c] = spec.input_shape;
    let x = Tensor::from_fn(&[n, t, h, w, c], |_| {
        T::from_f64_lossy(rng.random_range(-1.0..1.0))
    });
    let y = Tensor::from_fn(&[n, N_TARGETS], |_| {
        T::from_f64_lossy(rng.random_range(-2.0..2.0))
    });
    InMemoryExamples::new(x, y).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn small_step_never_increases_batch_loss(seed in any::<u64>(), which in 0u8..3) {
        let spec = tiny_spec(which);
        let data = examples::<f64>(&spec, 6, seed);
        let (x, y) = data.gather(&(0..6).collect::<Vec<_>>()).unwrap();
        let mut model = Model::<f64>::build(spec, seed).unwrap();
        model.set_dropout_rate(0.0).unwrap();
        let before = mse_loss_and_grad(&model.predict(&x).unwrap(), &y).unwrap().0;
        train_step(&mut model, &x, &y, 1e-4).unwrap();
        let after = mse_loss_and_grad(&model.predict(&x).unwrap(), &y).unwrap().0;
        prop_assert!(after <= before, "{after} > {before}");
    }
}

#[test]
fn evaluation_ignores_example_order_and_batching() {
    let spec = tiny_spec(0);
    let data = examples::<f32>(&spec, 57, 3);
    let mut model = Model::<f32>::build(spec, 3).unwrap();
    let base = evaluate(&mut model, &data, Split::Dev, 100).unwrap();

    let mut order: Vec<usize> = (0..57).collect();
    order.reverse();
    order.swap(3, 40);
    let (x, y) = data.gather(&order).unwrap();
    let shuffled = InMemoryExamples::new(x, y).unwrap();
    for batch in [1, 8, 57] {
        let r = evaluate(&mut model, &shuffled, Split::Dev, batch).unwrap();
        assert!((r.mse - base.mse).abs() <= 1e-12 * base.mse);
        for (a, b) in r.r2_per_target.iter().zip(&base.r2_per_target) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_learning_rate_keeps_dev_mse_constant() {
    let spec = tiny_spec(0);
    let train_data = examples::<f32>(&spec, 40, 1);
    let dev_data = examples::<f32>(&spec, 20, 2);
    let model = Model::<f32>::build(spec, 1).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        max_epochs: 4,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let (_, history) = train(model, &train_data, &dev_data, &cfg).unwrap();
    assert!(history.epochs.len() >= 2);
    assert!(history
        .epochs
        .iter()
        .all(|e| e.dev_mse == history.epochs[0].dev_mse));
}

#[test]
fn training_is_deterministic_and_restores_best_epoch() {
    let spec = tiny_spec(1);
    let train_data = examples::<f32>(&spec, 48, 5);
    let dev_data = examples::<f32>(&spec, 16, 6);
    let cfg = TrainConfig {
        learning_rate: 0.1,
        max_epochs: 4,
        batch_size: 16,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        train(
            Model::<f32>::build(spec.clone(), 9).unwrap(),
            &train_data,
            &dev_data,
            &cfg,
        )
        .unwrap()
    };
    let (mut a, ha) = run();
    let (b, hb) = run();
    assert_eq!(ha, hb);
    assert_eq!(a.parameters(), b.parameters());

    let best = ha.best().unwrap();
    assert!(ha.epochs.iter().all(|e| e.dev_mse >= best.dev_mse));
    let dev = evaluate(&mut a, &dev_data, Split::Dev, 100).unwrap();
    assert!((dev.mse - best.dev_mse).abs() < 1e-9);
}

#[test]
fn divergence_is_a_numeric_error() {
    let spec = tiny_spec(0);
    let train_data = examples::<f32>(&spec, 20, 7);
    let model = Model::<f32>::build(spec, 7).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e12,
        max_epochs: 5,
        batch_size: 10,
        ..TrainConfig::default()
    };
    let err = train(model, &train_data, &train_data, &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 4, "{err}");
}
