//! Adam with bias correction and decoupled weight decay.

use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        // beta2 = 0.9 is the published training recipe; override as needed.
        AdamConfig {
            lr: 3e-5,
            beta1: 0.9,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// Optimizer state: first/second moments per parameter and a step counter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        Adam {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// One update. `grads` is aligned with the parameter store order.
    ///
    /// `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) {
        assert_eq!(grads.len(), params.len(), "gradient count mismatch");
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            assert_eq!(p.shape(), g.shape(), "gradient shape mismatch");
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *pv);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore {
        let mut ps = ParamStore::new();
        ps.add("w", Tensor::new(&[values.len()], values.to_vec()).unwrap());
        ps
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut ps = store(&[2.0, -4.0]);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &ps);
        adam.step(&mut ps, &[Tensor::zeros(&[2])]);
        let shrink = 1.0 - 0.1 * 1e-5;
        assert_eq!(ps.get(ps.find("w").unwrap()).data(), &[2.0 * shrink, -4.0 * shrink]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut ps = store(&[0.0]);
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &ps);
        adam.step(&mut ps, &[Tensor::new(&[1], vec![1.0]).unwrap()]);
        // m_hat = 1, v_hat = 1 => delta = -0.1 / (1 + 1e-8)
        let w = ps.get(ps.find("w").unwrap()).data()[0];
        assert!((w + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        // constant gradient keeps m_hat = v_hat = 1 on later steps
        adam.step(&mut ps, &[Tensor::new(&[1], vec![1.0]).unwrap()]);
        let w2 = ps.get(ps.find("w").unwrap()).data()[0];
        assert!((w2 - w + 0.1).abs() < 1e-8);
    }
}
