use serde::{Deserialize, Serialize};

use crate::model::Gradients;
use crate::params::Params;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Params,
    v: Params,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &Params) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut Params, grads: &Gradients) {
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let moments = self.m.tensors_mut().zip(self.v.tensors_mut());
        for ((w, g), (m, v)) in params.tensors_mut().zip(grads.tensors()).zip(moments) {
            let it = w
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((w, &g), (m, v)) in it {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar(v: f64) -> Params {
        Params {
            layers: vec![vec![Tensor::new(vec![1], vec![v]).unwrap()]],
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(1.25);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        for _ in 0..5 {
            adam.step(&mut p, &scalar(0.0));
        }
        assert_eq!(p, scalar(1.25));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let cfg = AdamConfig::default();
        for g in [0.3, -4.0, 1e-3] {
            let mut p = scalar(0.0);
            let mut adam = Adam::new(cfg, &p);
            adam.step(&mut p, &scalar(g));
            let expected = -cfg.learning_rate * g / (g.abs() + cfg.eps);
            assert!((p.layers[0][0].data()[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn minimizes_shifted_parabola() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut p = scalar(0.0);
        let mut adam = Adam::new(cfg, &p);
        for _ in 0..2000 {
            let w = p.layers[0][0].data()[0];
            adam.step(&mut p, &scalar(2.0 * (w - 3.0)));
        }
        assert!((p.layers[0][0].data()[0] - 3.0).abs() < 1e-3);
    }
}
