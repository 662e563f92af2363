use crate::tensor::Tensor;

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// How the network output is scored against one-hot targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// `-sum_c y(c) ln yhat(c)`, averaged over the batch.
    Categorical,
    /// Independent per-unit cross-entropy, used when the output layer is a
    /// sigmoid rather than a softmax.
    BinaryPerUnit,
}

/// Mean categorical cross-entropy over the batch rows.
pub fn cross_entropy(y: &Tensor, y_hat: &Tensor) -> f64 {
    assert_eq!(y.shape(), y_hat.shape(), "target/prediction shape mismatch");
    let rows = y.rows();
    let total: f64 = y
        .data()
        .iter()
        .zip(y_hat.data())
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, p)| -t * p.max(PROB_FLOOR).ln())
        .sum();
    total / rows as f64
}

/// Mean over rows of the summed per-unit binary cross-entropy.
pub fn binary_cross_entropy(y: &Tensor, y_hat: &Tensor) -> f64 {
    assert_eq!(y.shape(), y_hat.shape(), "target/prediction shape mismatch");
    let rows = y.rows();
    let total: f64 = y
        .data()
        .iter()
        .zip(y_hat.data())
        .map(|(&t, &p)| {
            -(t * p.max(PROB_FLOOR).ln() + (1.0 - t) * (1.0 - p).max(PROB_FLOOR).ln())
        })
        .sum();
    total / rows as f64
}

impl LossKind {
    pub fn value(self, y: &Tensor, y_hat: &Tensor) -> f64 {
        match self {
            LossKind::Categorical => cross_entropy(y, y_hat),
            LossKind::BinaryPerUnit => binary_cross_entropy(y, y_hat),
        }
    }

    /// Gradient of the loss with respect to the predicted probabilities.
    pub(crate) fn grad_wrt_output(self, y: &Tensor, y_hat: &Tensor) -> Tensor {
        let rows = y.rows() as f64;
        let mut g = Tensor::zeros(y.shape());
        for ((gi, &t), &p) in g.data_mut().iter_mut().zip(y.data()).zip(y_hat.data()) {
            *gi = match self {
                LossKind::Categorical => -t / p.max(PROB_FLOOR),
                LossKind::BinaryPerUnit => {
                    -t / p.max(PROB_FLOOR) + (1.0 - t) / (1.0 - p).max(PROB_FLOOR)
                }
            } / rows;
        }
        g
    }
}

/// `(yhat - y) / batch`: the gradient at the pre-activation when softmax is
/// paired with categorical loss, or sigmoid with per-unit loss.
pub(crate) fn fused_output_grad(y: &Tensor, y_hat: &Tensor) -> Tensor {
    let rows = y.rows() as f64;
    let mut g = y_hat.clone();
    for (gi, &t) in g.data_mut().iter_mut().zip(y.data()) {
        *gi = (*gi - t) / rows;
    }
    g
}
