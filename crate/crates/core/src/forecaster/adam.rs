//! Adam optimizer with bias correction, one moment pair per parameter
//! tensor.

use super::lstm::{LstmGrads, LstmParams};

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates shaped like the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    m: LstmGrads,
    v: LstmGrads,
}

impl AdamState {
    pub fn new(hidden: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: LstmGrads::zeros(hidden),
            v: LstmGrads::zeros(hidden),
        }
    }

    fn update_tensor(
        config: &AdamConfig,
        step: u64,
        params: &mut [f64],
        grads: &[f64],
        m: &mut [f64],
        v: &mut [f64],
    ) {
        let b1 = config.beta1;
        let b2 = config.beta2;
        let bc1 = 1.0 - b1.powi(step as i32);
        let bc2 = 1.0 - b2.powi(step as i32);
        for idx in 0..params.len() {
            let g = grads[idx];
            m[idx] = b1 * m[idx] + (1.0 - b1) * g;
            v[idx] = b2 * v[idx] + (1.0 - b2) * g * g;
            let m_hat = m[idx] / bc1;
            let v_hat = v[idx] / bc2;
            params[idx] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }

    /// Apply one Adam update to every parameter tensor.
    pub fn step(&mut self, params: &mut LstmParams, grads: &LstmGrads) {
        self.step += 1;
        let c = &self.config;
        let t = self.step;
        Self::update_tensor(c, t, &mut params.w_ih, &grads.w_ih, &mut self.m.w_ih, &mut self.v.w_ih);
        Self::update_tensor(c, t, &mut params.w_hh, &grads.w_hh, &mut self.m.w_hh, &mut self.v.w_hh);
        Self::update_tensor(c, t, &mut params.bias, &grads.bias, &mut self.m.bias, &mut self.v.bias);
        Self::update_tensor(c, t, &mut params.w_out, &grads.w_out, &mut self.m.w_out, &mut self.v.w_out);
        let mut b = [params.b_out];
        let mut mb = [self.m.b_out];
        let mut vb = [self.v.b_out];
        Self::update_tensor(c, t, &mut b, &[grads.b_out], &mut mb, &mut vb);
        params.b_out = b[0];
        self.m.b_out = mb[0];
        self.v.b_out = vb[0];
    }
}
