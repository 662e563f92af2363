use crate::error::{NnError, Result};
use crate::layers::{conv, dense, gru, pool};
use crate::loss::{fused_output_grad, LossKind};
use crate::params::Params;
use crate::spec::{LayerSpec, ModelSpec};
use crate::tensor::Tensor;

/// Parameter gradients share the layout of [`Params`].
pub type Gradients = Params;

enum LayerCache {
    Dense(Tensor),
    Conv(Tensor),
    Pool { shape: Vec<usize>, argmax: Vec<usize> },
    Gru(Tensor, gru::GruCache),
    Activation(Tensor),
    Flatten(Vec<usize>),
}

/// Intermediate values from [`forward`] needed by [`backward`].
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    output: Tensor,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

fn gru_weights(p: &[Tensor]) -> gru::GruWeights<'_> {
    gru::GruWeights {
        input: &p[0],
        recurrent: &p[1],
        bias: &p[2],
    }
}

fn shape_input(spec: &ModelSpec, batch: &Tensor) -> Result<Tensor> {
    let input = spec.input_shape();
    let rows = batch.shape().first().copied().unwrap_or(0);
    let fits = match batch.shape() {
        [_, l, c] => *l == spec.input_length && *c == spec.input_channels,
        [_, l] => *l == spec.input_length && spec.input_channels == 1,
        _ => false,
    };
    if !fits {
        return Err(NnError::Shape {
            layer: 0,
            kind: "Input",
            msg: format!("batch shape {:?} does not match input {input:?}", batch.shape()),
        });
    }
    batch.clone().reshape(input.batch_dims(rows))
}

fn run(spec: &ModelSpec, params: &Params, batch: &Tensor, keep: bool) -> Result<(Tensor, Vec<LayerCache>)> {
    let shapes = spec.shapes()?;
    if params.layers.len() != spec.layers.len() {
        return Err(NnError::InvalidSpec("params do not match the number of layers".into()));
    }
    let mut x = shape_input(spec, batch)?;
    let rows = x.rows();
    let mut caches = Vec::with_capacity(if keep { spec.layers.len() } else { 0 });
    for (i, layer) in spec.layers.iter().enumerate() {
        let p = &params.layers[i];
        let (y, cache) = match *layer {
            LayerSpec::Dense { .. } => {
                let y = dense::forward(&x, &p[0], &p[1]);
                (y, keep.then(|| LayerCache::Dense(x)))
            }
            LayerSpec::Conv1d { .. } => {
                let y = conv::forward(&x, &p[0], &p[1]);
                (y, keep.then(|| LayerCache::Conv(x)))
            }
            LayerSpec::MaxPool1d { pool_size } => {
                let (y, argmax) = pool::forward(&x, pool_size);
                let shape = x.shape_vec();
                (y, keep.then(|| LayerCache::Pool { shape, argmax }))
            }
            LayerSpec::Gru { .. } => {
                let (y, c) = gru::forward(gru_weights(p), &x);
                (y, keep.then(|| LayerCache::Gru(x, c)))
            }
            LayerSpec::Activation { kind } => {
                let width = shapes[i + 1].width();
                let mut y = x;
                kind.apply(y.data_mut(), width);
                let cache = keep.then(|| LayerCache::Activation(y.clone()));
                (y, cache)
            }
            LayerSpec::Flatten => {
                let shape = x.shape_vec();
                let y = x.reshape(vec![rows, shapes[i + 1].size()])?;
                (y, keep.then(|| LayerCache::Flatten(shape)))
            }
        };
        if let Some(c) = cache {
            caches.push(c);
        }
        x = y;
    }
    Ok((x, caches))
}

/// Runs a batch through the network, keeping what [`backward`] needs.
pub fn forward(spec: &ModelSpec, params: &Params, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let (out, layers) = run(spec, params, batch, true)?;
    Ok((
        out.clone(),
        ForwardCache {
            layers,
            output: out,
        },
    ))
}

/// Inference only, in chunks to bound memory.
pub fn predict(spec: &ModelSpec, params: &Params, inputs: &Tensor) -> Result<Tensor> {
    const CHUNK: usize = 256;
    let rows = inputs.rows();
    let mut data = Vec::with_capacity(rows * spec.output_classes);
    let idx: Vec<usize> = (0..rows).collect();
    for chunk in idx.chunks(CHUNK) {
        let (out, _) = run(spec, params, &inputs.select_rows(chunk), false)?;
        data.extend_from_slice(out.data());
    }
    Tensor::new(vec![rows, spec.output_classes], data)
}

/// Gradient of `loss(y, yhat) + l2_lambda * sum ||W||^2` over every weight
/// matrix (biases are not regularized).
pub fn backward(
    spec: &ModelSpec,
    params: &Params,
    cache: &ForwardCache,
    y: &Tensor,
    l2_lambda: f64,
) -> Result<Gradients> {
    if y.shape() != cache.output.shape() {
        return Err(NnError::InvalidTensor(format!(
            "targets {:?} do not match outputs {:?}",
            y.shape(),
            cache.output.shape()
        )));
    }
    let loss = spec.loss_kind();
    let fused = matches!(
        (spec.final_activation(), loss),
        (Some(crate::ActivationKind::Softmax), LossKind::Categorical)
            | (Some(crate::ActivationKind::Sigmoid), LossKind::BinaryPerUnit)
    );
    let (mut grad, top) = if fused {
        (fused_output_grad(y, &cache.output), spec.layers.len() - 1)
    } else {
        (loss.grad_wrt_output(y, &cache.output), spec.layers.len())
    };

    let shapes = spec.shapes()?;
    let mut grads = params.zeros_like();
    for i in (0..top).rev() {
        let p = &params.layers[i];
        grad = match (&spec.layers[i], &cache.layers[i]) {
            (LayerSpec::Dense { .. }, LayerCache::Dense(x)) => {
                let (dx, dw, db) = dense::backward(x, &p[0], &grad);
                grads.layers[i] = vec![dw, db];
                dx
            }
            (LayerSpec::Conv1d { .. }, LayerCache::Conv(x)) => {
                let (dx, dw, db) = conv::backward(x, &p[0], &grad);
                grads.layers[i] = vec![dw, db];
                dx
            }
            (LayerSpec::MaxPool1d { .. }, LayerCache::Pool { shape, argmax }) => {
                pool::backward(shape, argmax, &grad)
            }
            (LayerSpec::Gru { .. }, LayerCache::Gru(x, c)) => {
                let (dx, dwi, dwr, db) = gru::backward(gru_weights(p), x, c, &grad);
                grads.layers[i] = vec![dwi, dwr, db];
                dx
            }
            (LayerSpec::Activation { kind }, LayerCache::Activation(out)) => {
                let mut g = grad;
                kind.backprop(out.data(), g.data_mut(), shapes[i + 1].width());
                g
            }
            (LayerSpec::Flatten, LayerCache::Flatten(shape)) => grad.reshape(shape.clone())?,
            _ => return Err(NnError::InvalidSpec(format!("cache does not match layer {i}"))),
        };
    }

    if l2_lambda > 0.0 {
        for (i, layer) in spec.layers.iter().enumerate() {
            let weights = match layer {
                LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. } => 1,
                LayerSpec::Gru { .. } => 2,
                _ => 0,
            };
            for k in 0..weights {
                for (g, &w) in grads.layers[i][k].data_mut().iter_mut().zip(params.layers[i][k].data()) {
                    *g += 2.0 * l2_lambda * w;
                }
            }
        }
    }
    Ok(grads)
}

/// `l2_lambda * sum ||W||^2` over the same tensors [`backward`] regularizes.
pub(crate) fn l2_penalty(spec: &ModelSpec, params: &Params, l2_lambda: f64) -> f64 {
    if l2_lambda == 0.0 {
        return 0.0;
    }
    let total: f64 = spec
        .layers
        .iter()
        .zip(&params.layers)
        .map(|(layer, p)| match layer {
            LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. } => p[0].sum_squares(),
            LayerSpec::Gru { .. } => p[0].sum_squares() + p[1].sum_squares(),
            _ => 0.0,
        })
        .sum();
    l2_lambda * total
}
