//! Backprop versus central finite differences, float64, eps = 1e-5.

use amiguard_nn::{
    backward, forward, ActivationKind, LayerSpec, LossKind, ModelSpec, Params, Tensor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;
/// Relative errors are measured against at least this magnitude so that
/// vanishing gradients are compared in absolute terms.
const FLOOR: f64 = 1e-6;

fn objective(spec: &ModelSpec, params: &Params, x: &Tensor, y: &Tensor, l2: f64) -> f64 {
    let (out, _) = forward(spec, params, x).unwrap();
    let data = match spec.loss_kind() {
        LossKind::Categorical => amiguard_nn::cross_entropy(y, &out),
        LossKind::BinaryPerUnit => amiguard_nn::binary_cross_entropy(y, &out),
    };
    let mut reg = 0.0;
    for (layer, p) in spec.layers.iter().zip(&params.layers) {
        let weights = match layer {
            LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. } => 1,
            LayerSpec::Gru { .. } => 2,
            _ => 0,
        };
        for t in &p[..weights] {
            reg += t.data().iter().map(|w| w * w).sum::<f64>();
        }
    }
    data + l2 * reg
}

/// Largest relative error over every parameter.
fn max_rel_error(spec: &ModelSpec, params: &Params, x: &Tensor, y: &Tensor, l2: f64) -> f64 {
    let (_, cache) = forward(spec, params, x).unwrap();
    let grads = backward(spec, params, &cache, y, l2).unwrap();
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for (li, layer) in params.layers.iter().enumerate() {
        for (ti, t) in layer.iter().enumerate() {
            for k in 0..t.len() {
                let orig = t.data()[k];
                probe.layers[li][ti].data_mut()[k] = orig + EPS;
                let up = objective(spec, &probe, x, y, l2);
                probe.layers[li][ti].data_mut()[k] = orig - EPS;
                let down = objective(spec, &probe, x, y, l2);
                probe.layers[li][ti].data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * EPS);
                let analytic = grads.layers[li][ti].data()[k];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(FLOOR);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

fn random_batch(rng: &mut ChaCha8Rng, rows: usize, len: usize, ch: usize, classes: usize) -> (Tensor, Tensor) {
    let x: Vec<f64> = (0..rows * len * ch).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut y = vec![0.0; rows * classes];
    for r in 0..rows {
        y[r * classes + rng.gen_range(0..classes)] = 1.0;
    }
    (
        Tensor::new(vec![rows, len, ch], x).unwrap(),
        Tensor::new(vec![rows, classes], y).unwrap(),
    )
}

fn check(spec: ModelSpec, seed: u64, l2: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::init(&spec, seed).unwrap();
    // non-zero biases so that every bias path is exercised
    for t in params.tensors_mut() {
        if t.shape().len() == 1 {
            for v in t.data_mut() {
                *v = rng.gen_range(-0.2..0.2);
            }
        }
    }
    let (x, y) = random_batch(&mut rng, 3, spec.input_length, spec.input_channels, spec.output_classes);
    max_rel_error(&spec, &params, &x, &y, l2)
}

fn act(kind: ActivationKind) -> LayerSpec {
    LayerSpec::activation(kind)
}

#[test]
fn dense_stack() {
    let spec = ModelSpec {
        input_length: 5,
        input_channels: 1,
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 7 },
            act(ActivationKind::Tanh),
            LayerSpec::Dense { units: 6 },
            act(ActivationKind::Elu),
            LayerSpec::Dense { units: 3 },
            act(ActivationKind::Softmax),
        ],
        output_classes: 3,
    };
    let err = check(spec, 1, 1e-3);
    assert!(err <= TOL, "max relative error {err:e}");
}

#[test]
fn conv_pool_path() {
    let spec = ModelSpec {
        input_length: 12,
        input_channels: 2,
        layers: vec![
            LayerSpec::Conv1d { filters: 4, kernel_size: 3 },
            act(ActivationKind::Relu),
            LayerSpec::Conv1d { filters: 3, kernel_size: 2 },
            act(ActivationKind::Elu),
            LayerSpec::MaxPool1d { pool_size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 5 },
            act(ActivationKind::Sigmoid),
            LayerSpec::Dense { units: 2 },
            act(ActivationKind::Softmax),
        ],
        output_classes: 2,
    };
    let err = check(spec, 2, 1e-3);
    assert!(err <= TOL, "max relative error {err:e}");
}

#[test]
fn conv_gru_with_sigmoid_output() {
    let spec = ModelSpec {
        input_length: 10,
        input_channels: 1,
        layers: vec![
            LayerSpec::Conv1d { filters: 3, kernel_size: 3 },
            act(ActivationKind::Relu),
            LayerSpec::MaxPool1d { pool_size: 2 },
            LayerSpec::Gru { units: 4 },
            LayerSpec::Dense { units: 2 },
            act(ActivationKind::Sigmoid),
        ],
        output_classes: 2,
    };
    let err = check(spec, 3, 1e-3);
    assert!(err <= TOL, "max relative error {err:e}");
}

#[test]
fn softmax_inside_and_linear_output() {
    // non-fused path: the loss gradient flows through a hidden softmax
    let spec = ModelSpec {
        input_length: 4,
        input_channels: 1,
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 3 },
            act(ActivationKind::Softmax),
            LayerSpec::Dense { units: 3 },
            act(ActivationKind::Softmax),
            act(ActivationKind::Linear),
        ],
        output_classes: 3,
    };
    let err = check(spec, 4, 0.0);
    assert!(err <= TOL, "max relative error {err:e}");
}

fn random_spec(rng: &mut ChaCha8Rng) -> ModelSpec {
    let kinds = [
        ActivationKind::Relu,
        ActivationKind::Elu,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Linear,
    ];
    let mut layers = Vec::new();
    let len = rng.gen_range(8..16);
    let convs = rng.gen_range(0..3);
    for _ in 0..convs {
        layers.push(LayerSpec::Conv1d {
            filters: rng.gen_range(1..5),
            kernel_size: rng.gen_range(1..3),
        });
        layers.push(act(kinds[rng.gen_range(0..kinds.len())]));
    }
    if rng.gen_bool(0.5) {
        layers.push(LayerSpec::MaxPool1d { pool_size: 2 });
    }
    if rng.gen_bool(0.5) {
        layers.push(LayerSpec::Gru { units: rng.gen_range(1..5) });
    } else {
        layers.push(LayerSpec::Flatten);
    }
    for _ in 0..rng.gen_range(0..3) {
        layers.push(LayerSpec::Dense { units: rng.gen_range(2..7) });
        layers.push(act(kinds[rng.gen_range(0..kinds.len())]));
    }
    let classes = rng.gen_range(2..4);
    layers.push(LayerSpec::Dense { units: classes });
    layers.push(act(if rng.gen_bool(0.7) {
        ActivationKind::Softmax
    } else {
        ActivationKind::Sigmoid
    }));
    ModelSpec {
        input_length: len,
        input_channels: rng.gen_range(1..3),
        layers,
        output_classes: classes,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_small_networks(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng);
        prop_assume!(spec.param_count().unwrap() <= 5000);
        let err = check(spec.clone(), seed, 1e-3);
        prop_assert!(err <= TOL, "spec {:?}: max relative error {:e}", spec.layers, err);
    }
}
