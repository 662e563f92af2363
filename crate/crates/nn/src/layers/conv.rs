//! Valid-padding, stride-1 temporal convolution over `[batch, len, channels]`.
//!
//! Kernels are stored as `[kernel, in_channels, filters]`, so tap `k` is a
//! contiguous `in_channels x filters` matrix and each sample reduces to
//! `kernel` small matrix products over shifted input windows.

use ndarray::{linalg::general_mat_mul, s};

use crate::tensor::{view, view_mut, Tensor};

pub(crate) fn forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (batch, len, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kernel, filters) = (w.shape()[0], w.shape()[2]);
    let out_len = len - kernel + 1;
    let mut y = Tensor::zeros(&[batch, out_len, filters]);
    for row in y.data_mut().chunks_exact_mut(filters) {
        row.copy_from_slice(b.data());
    }
    let (xs, ys) = (len * ch, out_len * filters);
    for n in 0..batch {
        let xb = view(&x.data()[n * xs..(n + 1) * xs], len, ch);
        let mut yb = view_mut(&mut y.data_mut()[n * ys..(n + 1) * ys], out_len, filters);
        for k in 0..kernel {
            let wk = view(&w.data()[k * ch * filters..(k + 1) * ch * filters], ch, filters);
            general_mat_mul(1.0, &xb.slice(s![k..k + out_len, ..]), &wk, 1.0, &mut yb);
        }
    }
    y
}

/// Returns `(dx, dw, db)`.
pub(crate) fn backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (batch, len, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kernel, filters) = (w.shape()[0], w.shape()[2]);
    let out_len = len - kernel + 1;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[filters]);
    super::accumulate_bias(dy.data(), filters, db.data_mut());

    let (xs, ys) = (len * ch, out_len * filters);
    let tap = ch * filters;
    for n in 0..batch {
        let xb = view(&x.data()[n * xs..(n + 1) * xs], len, ch);
        let dyb = view(&dy.data()[n * ys..(n + 1) * ys], out_len, filters);
        let mut dxb = view_mut(&mut dx.data_mut()[n * xs..(n + 1) * xs], len, ch);
        for k in 0..kernel {
            let window = xb.slice(s![k..k + out_len, ..]);
            let mut dwk = view_mut(&mut dw.data_mut()[k * tap..(k + 1) * tap], ch, filters);
            general_mat_mul(1.0, &window.t(), &dyb, 1.0, &mut dwk);
            let wk = view(&w.data()[k * tap..(k + 1) * tap], ch, filters);
            let mut dwin = dxb.slice_mut(s![k..k + out_len, ..]);
            general_mat_mul(1.0, &dyb, &wk.t(), 1.0, &mut dwin);
        }
    }
    (dx, dw, db)
}
