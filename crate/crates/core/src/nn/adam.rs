use serde::{Deserialize, Serialize};

use super::{Parameters, Tensor};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates, one tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new<P: Parameters<T>>(params: &P, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect()
        };
        OptimizerState {
            config,
            step: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    /// One bias-corrected Adam update of `params` using `grads`.
    pub fn step<P: Parameters<T>>(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let c = self.config;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(self.step as i32));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::from_f64_lossy(c.learning_rate);
        let eps = T::from_f64_lossy(c.epsilon);
        let grad_tensors = grads.tensors();
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grad_tensors)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            debug_assert_eq!(p.shape(), g.shape());
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let m_hat = *mi / corr1;
                let v_hat = *vi / corr2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Model, NetworkShape};

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut model = Model::<f64>::init(NetworkShape::desk(), 1);
        let before = model.clone();
        let grads = model.zeros_like();
        let mut opt = OptimizerState::new(&model, AdamConfig::default());
        for _ in 0..5 {
            opt.step(&mut model, &grads);
        }
        assert_eq!(model, before);
        assert_eq!(opt.step, 5);
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let shape = NetworkShape {
            fc_in: [2, 2],
            gru: [2, 2, 2],
            projection: [2, 2],
        };
        let mut model = Model::<f64>::zeros(shape);
        let mut grads = model.zeros_like();
        let n = grads.num_params();
        let g: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.3 } else { -2.0 }).collect();
        grads.assign_flat(&g);
        let config = AdamConfig {
            learning_rate: 1e-3,
            ..Default::default()
        };
        let mut opt = OptimizerState::new(&model, config);
        let mut prev = model.flatten();
        for _ in 0..200 {
            opt.step(&mut model, &grads);
            let now = model.flatten();
            for ((a, b), gi) in now.iter().zip(&prev).zip(&g) {
                let step = a - b;
                assert!((step + 1e-3 * gi.signum()).abs() < 1e-7, "{step}");
            }
            prev = now;
        }
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut model = Model::<f32>::init(NetworkShape::desk(), 2);
            let mut grads = model.zeros_like();
            let g: Vec<f32> = (0..grads.num_params()).map(|i| ((i % 7) as f32 - 3.0) * 0.01).collect();
            grads.assign_flat(&g);
            let mut opt = OptimizerState::new(&model, AdamConfig::default());
            for _ in 0..3 {
                opt.step(&mut model, &grads);
            }
            model.flatten()
        };
        assert_eq!(run(), run());
    }
}
