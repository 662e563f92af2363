//! Gated recurrent unit (reset-before-candidate form).
//!
//! For input `x`, previous state `h` and gate order `[z | r | h~]` along the
//! `3 * units` axis of the weights:
//!
//! ```text
//! z  = sigmoid(x Wz + h Uz + bz)
//! r  = sigmoid(x Wr + h Ur + br)
//! h~ = tanh(x Wh + (r * h) Uh + bh)
//! h' = (1 - z) * h + z * h~
//! ```

use ndarray::{linalg::general_mat_mul, s, Array2, ArrayView2, ArrayView3, Axis};

use crate::activation::sigmoid;
use crate::error::{NnError, Result};
use crate::tensor::{view, Tensor};

/// Borrowed GRU parameters: `input: [in, 3H]`, `recurrent: [H, 3H]`, `bias: [3H]`.
#[derive(Clone, Copy, Debug)]
pub struct GruWeights<'a> {
    pub input: &'a Tensor,
    pub recurrent: &'a Tensor,
    pub bias: &'a Tensor,
}

impl GruWeights<'_> {
    fn units(&self) -> usize {
        self.recurrent.shape()[0]
    }

    fn inputs(&self) -> usize {
        self.input.shape()[0]
    }
}

struct Gates {
    z: Array2<f64>,
    r: Array2<f64>,
    cand: Array2<f64>,
}

fn step_gates(w: &GruWeights<'_>, xw: ArrayView2<'_, f64>, h: ArrayView2<'_, f64>) -> Gates {
    let units = w.units();
    let u = view(w.recurrent.data(), units, 3 * units);

    let mut zr = xw.slice(s![.., ..2 * units]).to_owned();
    general_mat_mul(1.0, &h, &u.slice(s![.., ..2 * units]), 1.0, &mut zr);
    zr.mapv_inplace(sigmoid);
    let z = zr.slice(s![.., ..units]).to_owned();
    let r = zr.slice(s![.., units..]).to_owned();

    let rh = &r * &h;
    let mut cand = xw.slice(s![.., 2 * units..]).to_owned();
    general_mat_mul(1.0, &rh, &u.slice(s![.., 2 * units..]), 1.0, &mut cand);
    cand.mapv_inplace(f64::tanh);
    Gates { z, r, cand }
}

fn blend(h: ArrayView2<'_, f64>, g: &Gates) -> Array2<f64> {
    let mut out = h.to_owned();
    ndarray::Zip::from(&mut out)
        .and(&g.z)
        .and(&g.cand)
        .for_each(|o, &z, &c| *o = (1.0 - z) * *o + z * c);
    out
}

/// One recurrent step over a batch: `x_t: [batch, in]`, `h_prev: [batch, H]`.
pub fn gru_step(weights: GruWeights<'_>, x_t: &Tensor, h_prev: &Tensor) -> Result<Tensor> {
    let (units, inputs) = (weights.units(), weights.inputs());
    let batch = x_t.rows();
    if weights.input.shape() != [inputs, 3 * units]
        || weights.recurrent.shape() != [units, 3 * units]
        || weights.bias.shape() != [3 * units]
    {
        return Err(NnError::InvalidTensor("inconsistent GRU weight shapes".into()));
    }
    if x_t.shape() != [batch, inputs] || h_prev.shape() != [batch, units] {
        return Err(NnError::InvalidTensor(format!(
            "gru_step expects x [{batch}, {inputs}] and h [{batch}, {units}], got {:?} and {:?}",
            x_t.shape(),
            h_prev.shape()
        )));
    }
    let mut xw = Array2::from_shape_fn((batch, 3 * units), |(_, j)| weights.bias.data()[j]);
    general_mat_mul(
        1.0,
        &view(x_t.data(), batch, inputs),
        &view(weights.input.data(), inputs, 3 * units),
        1.0,
        &mut xw,
    );
    let h = view(h_prev.data(), batch, units);
    let gates = step_gates(&weights, xw.view(), h);
    let out = blend(h, &gates);
    Tensor::new(vec![batch, units], out.into_raw_vec_and_offset().0)
}

pub(crate) struct GruCache {
    /// Per step: previous state, update gate, reset gate, candidate.
    steps: Vec<(Array2<f64>, Gates)>,
}

/// Runs the sequence `x: [batch, T, in]` from a zero state; returns the final state.
pub(crate) fn forward(w: GruWeights<'_>, x: &Tensor) -> (Tensor, GruCache) {
    let (batch, steps, inputs) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let units = w.units();
    let xw = input_projection(&w, x);
    let xw3 = ArrayView3::from_shape((batch, steps, 3 * units), xw.as_slice().unwrap()).unwrap();
    debug_assert_eq!(inputs, w.inputs());

    let mut h = Array2::<f64>::zeros((batch, units));
    let mut cache = Vec::with_capacity(steps);
    for t in 0..steps {
        let gates = step_gates(&w, xw3.index_axis(Axis(1), t), h.view());
        let next = blend(h.view(), &gates);
        cache.push((std::mem::replace(&mut h, next), gates));
    }
    let out = Tensor::new(vec![batch, units], h.into_raw_vec_and_offset().0).unwrap();
    (out, GruCache { steps: cache })
}

fn input_projection(w: &GruWeights<'_>, x: &Tensor) -> Array2<f64> {
    let rows = x.shape()[0] * x.shape()[1];
    let (inputs, units) = (w.inputs(), w.units());
    let mut xw = Array2::from_shape_fn((rows, 3 * units), |(_, j)| w.bias.data()[j]);
    general_mat_mul(
        1.0,
        &view(x.data(), rows, inputs),
        &view(w.input.data(), inputs, 3 * units),
        1.0,
        &mut xw,
    );
    xw
}

/// Backpropagation through time. `dh: [batch, H]` is the gradient at the
/// final state. Returns `(dx, d_input, d_recurrent, d_bias)`.
pub(crate) fn backward(
    w: GruWeights<'_>,
    x: &Tensor,
    cache: &GruCache,
    dh: &Tensor,
) -> (Tensor, Tensor, Tensor, Tensor) {
    let (batch, steps, inputs) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let units = w.units();
    let u = view(w.recurrent.data(), units, 3 * units);
    let (u_zr, u_h) = (u.slice(s![.., ..2 * units]), u.slice(s![.., 2 * units..]));

    let mut d_xw = ndarray::Array3::<f64>::zeros((batch, steps, 3 * units));
    let mut d_u = Array2::<f64>::zeros((units, 3 * units));
    let mut dh = view(dh.data(), batch, units).to_owned();

    for t in (0..steps).rev() {
        let (h_prev, g) = &cache.steps[t];
        let mut dz = &dh * &(&g.cand - h_prev);
        let dcand = &dh * &g.z;
        let mut dh_prev = &dh * &g.z.mapv(|z| 1.0 - z);

        let da_h = &dcand * &g.cand.mapv(|c| 1.0 - c * c);
        let rh = &g.r * h_prev;
        general_mat_mul(1.0, &rh.t(), &da_h, 1.0, &mut d_u.slice_mut(s![.., 2 * units..]));
        let mut d_rh = Array2::<f64>::zeros((batch, units));
        general_mat_mul(1.0, &da_h, &u_h.t(), 0.0, &mut d_rh);
        let mut dr = &d_rh * h_prev;
        dh_prev += &(&d_rh * &g.r);

        ndarray::Zip::from(&mut dz).and(&g.z).for_each(|d, &z| *d *= z * (1.0 - z));
        ndarray::Zip::from(&mut dr).and(&g.r).for_each(|d, &r| *d *= r * (1.0 - r));

        let mut da_zr = Array2::<f64>::zeros((batch, 2 * units));
        da_zr.slice_mut(s![.., ..units]).assign(&dz);
        da_zr.slice_mut(s![.., units..]).assign(&dr);
        general_mat_mul(1.0, &h_prev.t(), &da_zr, 1.0, &mut d_u.slice_mut(s![.., ..2 * units]));
        general_mat_mul(1.0, &da_zr, &u_zr.t(), 1.0, &mut dh_prev);

        let mut slot = d_xw.index_axis_mut(Axis(1), t);
        slot.slice_mut(s![.., ..2 * units]).assign(&da_zr);
        slot.slice_mut(s![.., 2 * units..]).assign(&da_h);
        dh = dh_prev;
    }

    let rows = batch * steps;
    let d_xw = d_xw.into_shape_with_order((rows, 3 * units)).unwrap();
    let mut d_w = Array2::<f64>::zeros((inputs, 3 * units));
    general_mat_mul(1.0, &view(x.data(), rows, inputs).t(), &d_xw, 0.0, &mut d_w);
    let d_b = d_xw.sum_axis(Axis(0));
    let mut dx = Array2::<f64>::zeros((rows, inputs));
    general_mat_mul(1.0, &d_xw, &view(w.input.data(), inputs, 3 * units).t(), 0.0, &mut dx);

    let tensor = |a: Array2<f64>, shape: Vec<usize>| {
        Tensor::new(shape, a.as_standard_layout().iter().copied().collect()).unwrap()
    };
    (
        tensor(dx, vec![batch, steps, inputs]),
        tensor(d_w, vec![inputs, 3 * units]),
        tensor(d_u, vec![units, 3 * units]),
        Tensor::new(vec![3 * units], d_b.to_vec()).unwrap(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_keep_zero_state() {
        let (i, h) = (3, 4);
        let wi = Tensor::zeros(&[i, 3 * h]);
        let wr = Tensor::zeros(&[h, 3 * h]);
        let b = Tensor::zeros(&[3 * h]);
        let w = GruWeights { input: &wi, recurrent: &wr, bias: &b };
        let x = Tensor::full(&[2, i], 7.5);
        let out = gru_step(w, &x, &Tensor::zeros(&[2, h])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_halve_previous_state() {
        // z = 0.5 and h~ = 0, so h' = h / 2
        let (i, h) = (2, 2);
        let wi = Tensor::zeros(&[i, 3 * h]);
        let wr = Tensor::zeros(&[h, 3 * h]);
        let b = Tensor::zeros(&[3 * h]);
        let w = GruWeights { input: &wi, recurrent: &wr, bias: &b };
        let hp = Tensor::new(vec![1, 2], vec![0.8, -0.4]).unwrap();
        let out = gru_step(w, &Tensor::zeros(&[1, i]), &hp).unwrap();
        assert_eq!(out.data(), &[0.4, -0.2]);
    }

    #[test]
    fn rejects_bad_state_shape() {
        let wi = Tensor::zeros(&[2, 6]);
        let wr = Tensor::zeros(&[2, 6]);
        let b = Tensor::zeros(&[6]);
        let w = GruWeights { input: &wi, recurrent: &wr, bias: &b };
        assert!(gru_step(w, &Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 3])).is_err());
    }

    fn random_tensor(rng: &mut impl rand::Rng, shape: &[usize], scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
    }

    #[test]
    fn single_step_gradient_matches_finite_differences() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (batch, i, h) = (2, 3, 4);
        let mut params = vec![
            random_tensor(&mut rng, &[i, 3 * h], 0.8),
            random_tensor(&mut rng, &[h, 3 * h], 0.8),
            random_tensor(&mut rng, &[3 * h], 0.3),
        ];
        let x = random_tensor(&mut rng, &[batch, 1, i], 1.0);
        let coef = random_tensor(&mut rng, &[batch, h], 1.0);
        // f = sum(coef * h_1) for a one-step sequence from a zero state
        let f = |p: &[Tensor]| {
            let w = GruWeights { input: &p[0], recurrent: &p[1], bias: &p[2] };
            let x_t = x.clone().reshape(vec![batch, i]).unwrap();
            let out = gru_step(w, &x_t, &Tensor::zeros(&[batch, h])).unwrap();
            out.data().iter().zip(coef.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let w = GruWeights { input: &params[0], recurrent: &params[1], bias: &params[2] };
        let (_, cache) = forward(w, &x);
        let (_, dwi, dwr, db) = backward(w, &x, &cache, &coef);
        let analytic = [dwi, dwr, db];
        let eps = 1e-5;
        for t in 0..3 {
            for k in 0..params[t].len() {
                let orig = params[t].data()[k];
                params[t].data_mut()[k] = orig + eps;
                let up = f(&params);
                params[t].data_mut()[k] = orig - eps;
                let down = f(&params);
                params[t].data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let a = analytic[t].data()[k];
                let rel = (numeric - a).abs() / numeric.abs().max(a.abs()).max(1e-6);
                assert!(rel <= 1e-5, "tensor {t} index {k}: {a} vs {numeric}");
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn state_stays_in_open_unit_interval(seed in proptest::prelude::any::<u64>(), scale in 0.1f64..1.0) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (i, h) = (3, 5);
            let wi = random_tensor(&mut rng, &[i, 3 * h], scale);
            let wr = random_tensor(&mut rng, &[h, 3 * h], scale);
            let b = random_tensor(&mut rng, &[3 * h], scale);
            let w = GruWeights { input: &wi, recurrent: &wr, bias: &b };
            let mut state = random_tensor(&mut rng, &[2, h], 0.999);
            for _ in 0..10 {
                let x = random_tensor(&mut rng, &[2, i], 3.0);
                state = gru_step(w, &x, &state).unwrap();
                proptest::prop_assert!(state.data().iter().all(|v| v.abs() < 1.0));
            }
        }
    }
}
