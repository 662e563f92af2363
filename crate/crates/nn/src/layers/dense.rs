use ndarray::linalg::general_mat_mul;

use crate::tensor::{view, view_mut, Tensor};

/// `x: [batch, in]`, `w: [in, out]`, `b: [out]`.
pub(crate) fn forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (batch, inp, out) = (x.rows(), w.shape()[0], w.shape()[1]);
    let mut y = Tensor::zeros(&[batch, out]);
    for row in y.data_mut().chunks_exact_mut(out) {
        row.copy_from_slice(b.data());
    }
    general_mat_mul(
        1.0,
        &view(x.data(), batch, inp),
        &view(w.data(), inp, out),
        1.0,
        &mut view_mut(y.data_mut(), batch, out),
    );
    y
}

/// Returns `(dx, dw, db)`.
pub(crate) fn backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (batch, inp, out) = (x.rows(), w.shape()[0], w.shape()[1]);
    let dyv = view(dy.data(), batch, out);

    let mut dw = Tensor::zeros(w.shape());
    general_mat_mul(
        1.0,
        &view(x.data(), batch, inp).t(),
        &dyv,
        0.0,
        &mut view_mut(dw.data_mut(), inp, out),
    );

    let mut db = Tensor::zeros(&[out]);
    super::accumulate_bias(dy.data(), out, db.data_mut());

    let mut dx = Tensor::zeros(&[batch, inp]);
    general_mat_mul(
        1.0,
        &dyv,
        &view(w.data(), inp, out).t(),
        0.0,
        &mut view_mut(dx.data_mut(), batch, inp),
    );
    (dx, dw, db)
}
