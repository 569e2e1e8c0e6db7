//! Bias-corrected Adam over a fixed, ordered parameter list.

use super::Param;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: one step counter plus first/second moments matching the
/// parameter list order it was created with.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, param_lens: &[usize]) -> Self {
        AdamState {
            config,
            step: 0,
            m: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update from the accumulated gradients, each scaled by
    /// `grad_scale` (1/n for an n-sample accumulation group).
    /// Gradients are left untouched; the caller zeroes them.
    pub fn apply(&mut self, params: &mut [&mut Param], grad_scale: f32) {
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - (c.beta1 as f64).powi(t);
        let bc2 = 1.0 - (c.beta2 as f64).powi(t);
        // lr already folded with both bias corrections
        let lr_t = (c.learning_rate as f64 * bc2.sqrt() / bc1) as f32;
        for (p, (m, v)) in params.iter_mut().zip(self.m.iter_mut().zip(&mut self.v)) {
            assert_eq!(p.grad.len(), m.len());
            for i in 0..m.len() {
                let g = p.grad[i] * grad_scale;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                p.value.data_mut()[i] -= lr_t * m[i] / (v[i].sqrt() + c.epsilon);
            }
        }
    }
}
