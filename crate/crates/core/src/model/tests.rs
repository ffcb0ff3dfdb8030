use super::*;
use ndarray::ArrayD;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> SgnoConfig {
    let grid = GridSpec::new(vec![16]).unwrap();
    SgnoConfig {
        grid,
        state_channels: 1,
        width: 3,
        modes_per_axis: vec![5],
        num_blocks: 2,
        dt_data: 0.2,
        alpha_g: 0.7,
        alpha_w: 0.4,
        use_beta: true,
        margin: 0.01,
        norm_cap: None,
        filter: FilterSpec::smooth(1.0, 4.0),
        mask_placement: MaskPlacement::ForcingOnly,
        activation: Activation::Silu,
        coord_channels: true,
        history: 1,
        padding: 0,
        initial_step: 1,
        inner_steps: 1,
    }
}

fn random_state(config: &SgnoConfig, seed: u64) -> ArrayD<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shape = vec![config.state_channels];
    shape.extend_from_slice(config.grid.sizes());
    ArrayD::from_shape_fn(IxDyn(&shape), |_| rng.gen_range(-1.0..1.0))
}

fn loss_with_grad(
    model: &SgnoModel,
    u: &ArrayD<f64>,
    target: &ArrayD<f64>,
) -> (f64, Vec<f64>, ArrayD<f64>) {
    let (out, tape) = model.one_step_with_tape(u).unwrap();
    let diff = &out - target;
    let loss = 0.5 * diff.iter().map(|v| v * v).sum::<f64>();
    let mut grad = vec![0.0; model.param_len()];
    let u_bar = model.backward(&tape, &diff, &mut grad).unwrap();
    (loss, grad, u_bar)
}

fn loss_only(model: &SgnoModel, u: &ArrayD<f64>, target: &ArrayD<f64>) -> f64 {
    let out = model.one_step(u).unwrap();
    0.5 * out
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
}

fn check_param_gradients(model: &SgnoModel, u: &ArrayD<f64>, target: &ArrayD<f64>) {
    let (_, grad, _) = loss_with_grad(model, u, target);
    let len = model.param_len();
    let stride = (len / 60).max(1);
    let h = 1e-5;
    for i in (0..len).step_by(stride) {
        let mut plus = model.clone();
        plus.params_mut().data_mut()[i] += h;
        let mut minus = model.clone();
        minus.params_mut().data_mut()[i] -= h;
        let fd = (loss_only(&plus, u, target) - loss_only(&minus, u, target)) / (2.0 * h);
        let an = grad[i];
        let tol = 1e-6 * an.abs().max(fd.abs()).max(1.0);
        assert!(
            (an - fd).abs() <= tol,
            "param {i}: analytic {an} vs finite difference {fd}"
        );
    }
}

#[test]
fn fresh_model_is_identity() {
    let model = SgnoModel::new(small_config(), 7).unwrap();
    let u = random_state(model.config(), 1);
    let out = model.one_step(&u).unwrap();
    assert_eq!(out, u);
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let model = SgnoModel::new(small_config(), 11).unwrap();
    let u = random_state(model.config(), 2);
    let target = random_state(model.config(), 3);
    check_param_gradients(&model, &u, &target);
}

#[test]
fn input_gradient_matches_finite_differences() {
    let model = SgnoModel::new(small_config(), 11).unwrap();
    let u = random_state(model.config(), 4);
    let target = random_state(model.config(), 5);
    let (_, _, u_bar) = loss_with_grad(&model, &u, &target);
    let h = 1e-5;
    let flat_len = u.len();
    for i in (0..flat_len).step_by(3) {
        let mut plus = u.clone();
        plus.as_slice_mut().unwrap()[i] += h;
        let mut minus = u.clone();
        minus.as_slice_mut().unwrap()[i] -= h;
        let fd =
            (loss_only(&model, &plus, &target) - loss_only(&model, &minus, &target)) / (2.0 * h);
        let an = u_bar.as_slice().unwrap()[i];
        let tol = 1e-6 * an.abs().max(fd.abs()).max(1.0);
        assert!(
            (an - fd).abs() <= tol,
            "input {i}: analytic {an} vs finite difference {fd}"
        );
    }
}

#[test]
fn gradients_hold_with_padding_and_full_mask() {
    let mut config = small_config();
    config.grid = GridSpec::new(vec![12]).unwrap();
    config.padding = 2;
    config.modes_per_axis = vec![4];
    config.mask_placement = MaskPlacement::All;
    config.num_blocks = 1;
    let model = SgnoModel::new(config, 20).unwrap();
    let u = random_state(model.config(), 6);
    let target = random_state(model.config(), 7);
    check_param_gradients(&model, &u, &target);
}

#[test]
fn gradients_hold_in_two_dimensions() {
    let mut config = small_config();
    config.grid = GridSpec::new(vec![8, 8]).unwrap();
    config.modes_per_axis = vec![3, 3];
    config.width = 2;
    config.num_blocks = 2;
    let model = SgnoModel::new(config, 21).unwrap();
    let u = random_state(model.config(), 8);
    let target = random_state(model.config(), 9);
    check_param_gradients(&model, &u, &target);
}

#[test]
fn linear_configuration_matches_spectral_multiplication() {
    let grid = GridSpec::new(vec![32]).unwrap();
    let mut config = SgnoConfig::preset(grid, 1);
    config.width = 2;
    config.modes_per_axis = vec![5];
    config.num_blocks = 3;
    config.dt_data = 0.3;
    config.alpha_g = 0.0;
    config.alpha_w = 0.0;
    config.use_beta = true;
    config.activation = Activation::Identity;
    config.coord_channels = false;
    config.filter = FilterSpec::none();
    let mut model = SgnoModel::new(config, 3).unwrap();
    model.set_channel_copy_nets();
    let k = model.layout().num_retained();
    let lambda = Array2::from_shape_fn((k, 2), |(m, c)| {
        if c == 0 {
            Complex64::new(-1.5, 0.4 * m as f64)
        } else {
            Complex64::new(-2.0, 0.0)
        }
    });
    model.set_generator_lambda(&lambda).unwrap();

    let u = random_state(model.config(), 10);
    let residual = model.residual_branch(&u).unwrap();

    let layout = model.layout();
    let mut spec = layout.forward(&u).unwrap();
    {
        let flat = spec.as_slice_mut().unwrap();
        let retained: Vec<usize> = layout.retained().to_vec();
        let keep: std::collections::HashSet<usize> = retained.iter().copied().collect();
        for (i, v) in flat.iter_mut().enumerate() {
            if !keep.contains(&i) {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        for (m, &f) in retained.iter().enumerate() {
            flat[f] *= (model.config().dt_data * lambda[(m, 0)]).exp();
        }
    }
    let expected = layout.inverse(&spec).unwrap();
    let scale = expected.iter().map(|v| v * v).sum::<f64>().sqrt();
    let err = residual
        .iter()
        .zip(expected.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-12 * scale.max(1.0), "max error {err}");
}

#[test]
fn count_matches_registered_parameters() {
    let config = small_config();
    let count = count_parameters(&config).unwrap();
    let model = SgnoModel::new(config, 0).unwrap();
    assert_eq!(count.total, model.param_len());
    assert_eq!(count, model.param_count());
}

#[test]
fn one_dimensional_preset_parameter_count() {
    let grid = GridSpec::new(vec![64]).unwrap();
    let config = SgnoConfig::preset(grid, 1);
    let count = count_parameters(&config).unwrap();
    assert_eq!(count.generator, 784);
    assert_eq!(count.mixing, 43_904);
    assert_eq!(count.total, 49_673);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut model = SgnoModel::new(small_config(), 99).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for v in model.params_mut().data_mut() {
        *v += rng.gen_range(-0.5..0.5);
    }
    model.step = 1234;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save_checkpoint(&path).unwrap();
    let restored = SgnoModel::load_checkpoint(&path).unwrap();

    assert_eq!(restored.step, 1234);
    assert_eq!(restored.seed(), 99);
    let a: Vec<u64> = model.params().data().iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = restored
        .params()
        .data()
        .iter()
        .map(|v| v.to_bits())
        .collect();
    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_string(model.config()).unwrap(),
        serde_json::to_string(restored.config()).unwrap()
    );
}

#[test]
fn checkpoint_rejects_foreign_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bogus.ckpt");
    std::fs::write(&path, b"definitely not a checkpoint").unwrap();
    assert!(SgnoModel::load_checkpoint(&path).is_err());
}

#[test]
fn capped_mixing_rescales_only_oversized_matrices() {
    let mut mixing = Array3::<Complex64>::zeros((2, 3, 3));
    for i in 0..3 {
        mixing[(0, i, i)] = Complex64::new(5.0, 0.0);
        mixing[(1, i, i)] = Complex64::new(1.0, 0.0);
    }
    let capped = capped_mixing(&mixing, 2.0);
    let n0 = complex_spectral_norm(capped.index_axis(ndarray::Axis(0), 0), 100, 1e-12);
    assert!((n0 - 2.0).abs() < 1e-9, "capped norm {n0}");
    for i in 0..3 {
        assert_eq!(capped[(1, i, i)], Complex64::new(1.0, 0.0));
    }
}

#[test]
fn generator_assignment_round_trips() {
    let mut model = SgnoModel::new(small_config(), 1).unwrap();
    let k = model.layout().num_retained();
    let c = model.config().width;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let lambda = Array2::from_shape_fn((k, c), |_| {
        Complex64::new(rng.gen_range(-3.0..-0.2), rng.gen_range(-2.0..2.0))
    });
    model.set_generator_lambda(&lambda).unwrap();
    let got = model.stabilized_lambda();
    for (a, b) in got.iter().zip(lambda.iter()) {
        assert!((a - b).norm() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn generator_assignment_rejects_unstable_values() {
    let mut model = SgnoModel::new(small_config(), 1).unwrap();
    let k = model.layout().num_retained();
    let c = model.config().width;
    let lambda = Array2::from_elem((k, c), Complex64::new(0.5, 0.0));
    assert!(model.set_generator_lambda(&lambda).is_err());
}

#[test]
fn max_re_lambda_is_negative_for_random_parameters() {
    for seed in 0..5 {
        let model = SgnoModel::new(small_config(), seed).unwrap();
        assert!(model.max_re_lambda() < 0.0);
    }
}

#[test]
fn rejects_bad_input() {
    let model = SgnoModel::new(small_config(), 1).unwrap();
    let wrong = ArrayD::<f64>::zeros(IxDyn(&[1, 8]));
    assert!(model.one_step(&wrong).is_err());
    let mut u = random_state(model.config(), 1);
    u.as_slice_mut().unwrap()[3] = f64::NAN;
    assert!(model.one_step(&u).is_err());
}

#[test]
fn construction_is_deterministic_in_config_and_seed() {
    let a = SgnoModel::new(small_config(), 42).unwrap();
    let b = SgnoModel::new(small_config(), 42).unwrap();
    assert_eq!(a.params().data(), b.params().data());
    let c = SgnoModel::new(small_config(), 43).unwrap();
    assert_ne!(a.params().data(), c.params().data());
}

#[test]
fn coordinate_rows_follow_grid_axes() {
    let grid = GridSpec::new(vec![8, 16]).unwrap();
    let rows = coordinate_rows(&grid);
    assert_eq!(rows.dim(), (2, 128));
    for i1 in 0..8 {
        for i2 in 0..16 {
            let p = i1 * 16 + i2;
            assert_eq!(rows[(0, p)], i1 as f64 / 8.0);
            assert_eq!(rows[(1, p)], i2 as f64 / 16.0);
        }
    }
}

#[test]
fn softplus_inverse_round_trips() {
    for &x in &[-20.0, -3.0, -0.5, 0.0, 0.5, 3.0, 40.0] {
        let y = softplus(x);
        assert!(y > 0.0);
        let back = inverse_softplus(y);
        assert!((back - x).abs() < 1e-9, "{x} -> {y} -> {back}");
    }
    assert!((softplus(800.0) - 800.0).abs() < 1e-12);
}

#[test]
fn config_validation_catches_bad_settings() {
    let mut config = small_config();
    config.dt_data = 0.0;
    assert!(config.validate().is_err());

    let mut config = small_config();
    config.history = 2;
    assert!(config.validate().is_err());

    let mut config = small_config();
    config.modes_per_axis = vec![30];
    assert!(config.validate().is_err());

    let mut config = small_config();
    config.norm_cap = Some(0.0);
    assert!(config.validate().is_err());
}

#[test]
fn param_registry_uses_stable_names() {
    let model = SgnoModel::new(small_config(), 1).unwrap();
    for name in [
        "generator.eta",
        "generator.beta",
        "mixing.re",
        "mixing.im",
        "lift.w1",
        "proj.b2",
        "forcing.w2",
        "correction.b1",
    ] {
        assert!(model.params().seg(name).is_ok(), "missing {name}");
    }
}
