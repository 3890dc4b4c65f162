use super::ChartModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter tensor, in model
/// order (weight then bias per layer).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub(crate) fn ensure_shapes(&mut self, model: &ChartModel) {
        let sizes: Vec<usize> = model
            .layers()
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect();
        let matches = self.moments.len() == sizes.len() && self.moments.iter().zip(&sizes).all(|(m, &n)| m.0.len() == n);
        if !matches {
            self.moments = sizes.iter().map(|&n| (vec![0.0; n], vec![0.0; n])).collect();
            self.step = 0;
        }
    }

    pub(crate) fn moments_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let (m, v) = &mut self.moments[i];
        (m, v)
    }
}

/// Bias-corrected Adam update of `params` in place; `t` is the 1-based step.
pub fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, lr: f64, cfg: &AdamConfig) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}
