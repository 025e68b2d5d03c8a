use std::collections::HashMap;

use crate::supernet::Params;

/// Adaptive-moment optimizer with per-tensor state keyed by name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>, u64)>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            moments: HashMap::new(),
        }
    }

    /// One descent step on `value` along `grad`.
    pub fn step(&mut self, name: &str, value: &mut [f64], grad: &[f64], lr: f64) {
        let (m, v, t) = self
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![0.0; value.len()], vec![0.0; value.len()], 0));
        *t += 1;
        let c1 = 1.0 - self.beta1.powi(*t as i32);
        let c2 = 1.0 - self.beta2.powi(*t as i32);
        for i in 0..value.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            value[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }

    /// Steps every tensor of `params` that has a gradient.
    pub fn step_params(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        for (name, t) in params.iter_mut() {
            if let Some(g) = grads.get(name) {
                self.step(name, t.data_mut(), g.data(), lr);
            }
        }
    }
}

/// Learning rate decayed by `factor` every `every` steps.
pub fn step_decay(base: f64, factor: f64, every: usize, step: usize) -> f64 {
    if every == 0 {
        return base;
    }
    base * factor.powi((step / every) as i32)
}
