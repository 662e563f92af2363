use amiguard_nn::{
    accuracy, backward, cross_entropy, forward, train, ActivationKind, Adam, AdamConfig, Dataset,
    LayerSpec, ModelSpec, NnError, Params, Tensor, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mlp() -> ModelSpec {
    ModelSpec {
        input_length: 2,
        input_channels: 1,
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8 },
            LayerSpec::activation(ActivationKind::Tanh),
            LayerSpec::Dense { units: 2 },
            LayerSpec::activation(ActivationKind::Softmax),
        ],
        output_classes: 2,
    }
}

/// Points on either side of the line x + y = 0 with a margin of 0.2.
fn separable(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    while rows.len() < n {
        let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let s: f64 = p[0] + p[1];
        if s.abs() < 0.2 {
            continue;
        }
        rows.push(p.to_vec());
        labels.push(usize::from(s > 0.0));
    }
    Dataset::from_sequences(&rows, labels).unwrap()
}

fn config() -> TrainConfig {
    TrainConfig {
        epochs: 50,
        batch_size: 16,
        learning_rate: 0.01,
        l2_lambda: 0.0,
        rng_seed: 7,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_toy_set_is_learned() {
    let data = separable(200, 1);
    let spec = mlp();
    let (params, history) = train(&spec, &data, &config()).unwrap();
    assert_eq!(history.len(), 50);
    let acc = accuracy(&spec, &params, &data).unwrap();
    assert!(acc >= 0.99, "train accuracy {acc}");
}

#[test]
fn zero_epochs_returns_initial_params() {
    let spec = mlp();
    let cfg = TrainConfig { epochs: 0, ..config() };
    let (params, history) = train(&spec, &separable(10, 1), &cfg).unwrap();
    assert!(history.is_empty());
    assert_eq!(params, Params::init(&spec, cfg.rng_seed).unwrap());
}

#[test]
fn same_seed_same_params() {
    let spec = mlp();
    let data = separable(64, 2);
    let cfg = TrainConfig { epochs: 5, stratified: true, ..config() };
    let (a, ha) = train(&spec, &data, &cfg).unwrap();
    let (b, hb) = train(&spec, &data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    let (c, _) = train(&spec, &data, &TrainConfig { rng_seed: 8, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn full_batch_loss_does_not_increase_early() {
    let spec = mlp();
    let data = separable(100, 3);
    let mut params = Params::init(&spec, 5).unwrap();
    let mut y = Tensor::zeros(&[data.len(), 2]);
    for (i, &l) in data.labels.iter().enumerate() {
        y.data_mut()[i * 2 + l] = 1.0;
    }
    let mut adam = Adam::new(AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() }, &params);
    let mut last = f64::INFINITY;
    for _ in 0..10 {
        let (out, cache) = forward(&spec, &params, &data.inputs).unwrap();
        let loss = cross_entropy(&y, &out);
        assert!(loss <= last + 1e-12, "loss rose from {last} to {loss}");
        last = loss;
        let g = backward(&spec, &params, &cache, &y, 0.0).unwrap();
        adam.step(&mut params, &g);
    }
}

#[test]
fn duplicated_rows_give_the_single_row_gradient() {
    let spec = mlp();
    let params = Params::init(&spec, 3).unwrap();
    let x1 = Tensor::new(vec![1, 2], vec![0.3, -0.7]).unwrap();
    let y1 = Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap();
    let x3 = Tensor::new(vec![3, 2], [0.3, -0.7].repeat(3)).unwrap();
    let y3 = Tensor::new(vec![3, 2], [0.0, 1.0].repeat(3)).unwrap();
    let (_, c1) = forward(&spec, &params, &x1).unwrap();
    let (_, c3) = forward(&spec, &params, &x3).unwrap();
    let g1 = backward(&spec, &params, &c1, &y1, 0.0).unwrap();
    let g3 = backward(&spec, &params, &c3, &y3, 0.0).unwrap();
    for (a, b) in g1.tensors().zip(g3.tensors()) {
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() <= 1e-15 * u.abs().max(1.0));
        }
    }
}

#[test]
fn gradient_vanishes_at_a_perfect_fit() {
    let spec = ModelSpec {
        input_length: 1,
        input_channels: 1,
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2 },
            LayerSpec::activation(ActivationKind::Softmax),
        ],
        output_classes: 2,
    };
    let mut params = Params::init(&spec, 1).unwrap();
    params.layers[1][0].data_mut().copy_from_slice(&[1000.0, -1000.0]);
    let x = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
    let y = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
    let (out, cache) = forward(&spec, &params, &x).unwrap();
    assert_eq!(cross_entropy(&y, &out), 0.0);
    let g = backward(&spec, &params, &cache, &y, 0.0).unwrap();
    let norm: f64 = g.tensors().map(Tensor::sum_squares).sum::<f64>().sqrt();
    assert!(norm < 1e-8, "gradient norm {norm}");
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let spec = mlp();
    let rows = vec![vec![f64::NAN, 1.0], vec![-1.0, 1.0]];
    let data = Dataset::from_sequences(&rows, vec![0, 1]).unwrap();
    let err = train(&spec, &data, &config()).unwrap_err();
    assert!(matches!(err, NnError::NonFinite { epoch: 0, .. }), "{err}");
    assert!(err.to_string().contains("learning rate"));
}
