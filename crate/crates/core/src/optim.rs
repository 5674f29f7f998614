//! Adam with bias correction and the step learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{param_err, shape_err, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
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

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(unit(self.beta1) && unit(self.beta2) && self.eps > 0.0) {
            return Err(param_err!("Adam needs betas in [0, 1) and a positive epsilon"));
        }
        Ok(())
    }
}

/// Moments of one parameter group, one pair of buffers per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One update of every tensor in the group.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape_err!("Adam group has {} tensors", self.m.len()));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(shape_err!("Adam tensor shape mismatch"));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - math::pow(beta1, t);
        let c2 = 1.0 - math::pow(beta2, t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (math::sqrt(vhat) + eps);
            }
        }
        Ok(())
    }
}

/// `base_lr * decay^floor(epoch / every)`.
pub fn lr_schedule_with(epoch: usize, base_lr: f64, decay: f64, every: usize) -> f64 {
    let k = epoch / every.max(1);
    base_lr * math::pow(decay, k as f64)
}

/// Halves the rate every five epochs.
pub fn lr_schedule(epoch: usize, base_lr: f64) -> f64 {
    lr_schedule_with(epoch, base_lr, 0.5, 5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule() {
        assert_eq!(lr_schedule(0, 0.01), 0.01);
        assert_eq!(lr_schedule(4, 0.01), 0.01);
        assert_eq!(lr_schedule(5, 0.01), 0.005);
        assert_eq!(lr_schedule(10, 0.01), 0.0025);
        assert_eq!(lr_schedule_with(7, 1.0, 1.0, 5), 1.0);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut adam = Adam::new(AdamConfig::default(), &[3, 2]);
        let mut a = vec![1.0, 2.0, 3.0];
        let mut b = vec![0.0, -1.0];
        let (ga, gb) = (vec![1.0; 3], vec![1.0; 2]);
        adam.step(&mut [&mut a, &mut b], &[&ga, &gb], 0.01).unwrap();
        for (x, x0) in a.iter().chain(&b).zip([1.0, 2.0, 3.0, 0.0, -1.0]) {
            let d = (x - x0).abs();
            assert!(d > 0.99 * 0.01 && d <= 0.01, "{d}");
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut adam = Adam::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.5, -0.5];
        adam.step(&mut [&mut p], &[&[0.0, 0.0]], 0.1).unwrap();
        assert_eq!(p, vec![0.5, -0.5]);
    }

    #[test]
    fn shape_mismatch() {
        let mut adam = Adam::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0; 3];
        assert!(adam.step(&mut [&mut p], &[&[0.0; 3]], 0.1).is_err());
        assert!(AdamConfig { beta1: 1.0, ..AdamConfig::default() }.validate().is_err());
    }

    #[test]
    fn bias_correction_against_closed_form() {
        // Constant gradient: mhat = g and vhat = g^2 at every step.
        let mut adam = Adam::new(AdamConfig::default(), &[1]);
        let mut p = vec![0.0];
        for _ in 0..25 {
            adam.step(&mut [&mut p], &[&[0.3]], 0.01).unwrap();
        }
        let expected = -25.0 * 0.01 * 0.3 / (0.3 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-12);
    }
}
