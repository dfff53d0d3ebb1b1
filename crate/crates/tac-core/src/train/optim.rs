//! Adam optimizer, built directly from its published update rule.
//!
//! First and second moment estimates with bias correction:
//! `m = b1*m + (1-b1)*g`, `v = b2*v + (1-b2)*g^2`,
//! `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
//! Weight decay is classic L2: added to the gradient before the moments.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Starts a new optimization step; call before updating the groups.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Updates one parameter group in place. Groups are identified by a
    /// stable index so moment buffers persist across steps.
    pub fn update(&mut self, group: usize, lr: f64, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        while self.m.len() <= group {
            self.m.push(Vec::new());
            self.v.push(Vec::new());
        }
        if self.m[group].len() != params.len() {
            self.m[group] = vec![0.0; params.len()];
            self.v[group] = vec![0.0; params.len()];
        }
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i] + weight_decay * params[i];
            let m = &mut self.m[group][i];
            let v = &mut self.v[group][i];
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    /// Serialized moment buffers for checkpointing, in group order.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    pub fn restore(cfg: AdamConfig, step: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Self {
        Self { cfg, step, m, v }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut adam = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        let mut p = vec![1.0, -2.0];
        adam.begin_step();
        adam.update(0, 0.1, &mut p, &[0.5, -3.0]);
        assert!((p[0] - (1.0 - 0.1)).abs() < 1e-6);
        assert!((p[1] - (-2.0 + 0.1)).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_never_moves_params() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = vec![0.25, -0.75];
        let before = p.clone();
        for _ in 0..10 {
            adam.begin_step();
            adam.update(0, 0.0, &mut p, &[1.0, 2.0]);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // Minimize 0.5 * ||p - target||^2.
        let target = [0.3, -1.2, 2.0];
        let mut adam = Adam::new(AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        });
        let mut p = vec![0.0; 3];
        for _ in 0..2000 {
            let grads: Vec<f64> = p.iter().zip(&target).map(|(pi, t)| pi - t).collect();
            adam.begin_step();
            adam.update(0, 0.01, &mut p, &grads);
        }
        for (pi, t) in p.iter().zip(&target) {
            assert!((pi - t).abs() < 1e-3, "{pi} vs {t}");
        }
    }
}
