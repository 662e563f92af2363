use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Linear,
    Relu,
    /// Exponential linear unit with alpha = 1.
    Elu,
    Sigmoid,
    Tanh,
    /// Normalizes over the last axis.
    Softmax,
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

/// Max-shifted softmax.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    out
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

impl ActivationKind {
    /// Applies the activation to `data`, treating every `width` consecutive
    /// values as one softmax group.
    pub(crate) fn apply(self, data: &mut [f64], width: usize) {
        match self {
            ActivationKind::Linear => {}
            ActivationKind::Relu => data.iter_mut().for_each(|x| *x = relu(*x)),
            ActivationKind::Elu => data.iter_mut().for_each(|x| *x = elu(*x)),
            ActivationKind::Sigmoid => data.iter_mut().for_each(|x| *x = sigmoid(*x)),
            ActivationKind::Tanh => data.iter_mut().for_each(|x| *x = x.tanh()),
            ActivationKind::Softmax => data.chunks_exact_mut(width).for_each(softmax_in_place),
        }
    }

    /// Turns the upstream gradient `grad` (w.r.t. the output) into the
    /// gradient w.r.t. the input, given the cached output `out`.
    pub(crate) fn backprop(self, out: &[f64], grad: &mut [f64], width: usize) {
        match self {
            ActivationKind::Linear => {}
            ActivationKind::Relu => {
                for (g, &y) in grad.iter_mut().zip(out) {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            ActivationKind::Elu => {
                // for x <= 0, d/dx (e^x - 1) = e^x = y + 1
                for (g, &y) in grad.iter_mut().zip(out) {
                    if y <= 0.0 {
                        *g *= y + 1.0;
                    }
                }
            }
            ActivationKind::Sigmoid => {
                for (g, &y) in grad.iter_mut().zip(out) {
                    *g *= y * (1.0 - y);
                }
            }
            ActivationKind::Tanh => {
                for (g, &y) in grad.iter_mut().zip(out) {
                    *g *= 1.0 - y * y;
                }
            }
            ActivationKind::Softmax => {
                for (g, y) in grad.chunks_exact_mut(width).zip(out.chunks_exact(width)) {
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    for (gi, &yi) in g.iter_mut().zip(y) {
                        *gi = yi * (*gi - dot);
                    }
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Linear => "linear",
            ActivationKind::Relu => "relu",
            ActivationKind::Elu => "elu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Softmax => "softmax",
        }
    }
}
