//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{dim_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new<P: ParamSet + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
        Self {
            config,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.first_moment, &self.second_moment)
    }

    /// One bias-corrected update. Non-finite gradients are rejected before
    /// any parameter or moment is touched.
    pub fn step<P: ParamSet + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let gs = grads.slices();
        if gs.len() != self.first_moment.len()
            || gs.iter().zip(&self.first_moment).any(|(g, m)| g.len() != m.len())
        {
            return dim_err("gradient layout does not match optimizer state");
        }
        if gs.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical("non-finite gradient passed to Adam".into()));
        }
        let mut ps = params.slices_mut();
        if ps.len() != gs.len() || ps.iter().zip(&gs).any(|(p, g)| p.len() != g.len()) {
            return dim_err("parameter layout does not match gradients");
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in ps
            .iter_mut()
            .zip(&gs)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let (step_size, inv_c2) = (lr / c1, 1.0 / c2);
            for (((pi, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                *pi -= step_size * *mi / ((*vi * inv_c2).sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar(Vec<f64>);

    impl ParamSet for Scalar {
        fn slices(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn slices_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = Scalar(vec![1.0, -2.0]);
        let mut opt = AdamState::new(AdamConfig::with_lr(0.1), &p);
        opt.step(&mut p, &Scalar(vec![1.0, 1.0])).unwrap();
        let before = p.0.clone();
        let m0 = opt.moments().0[0][0];
        opt.step(&mut p, &Scalar(vec![0.0, 0.0])).unwrap();
        let m1 = opt.moments().0[0][0];
        assert!(m1.abs() < m0.abs());
        // Update is driven by the decayed first moment only, never by the zero gradient itself.
        let mut fresh = Scalar(vec![3.0]);
        let mut opt2 = AdamState::new(AdamConfig::with_lr(0.1), &fresh);
        opt2.step(&mut fresh, &Scalar(vec![0.0])).unwrap();
        assert_eq!(fresh.0, vec![3.0]);
        assert_eq!(opt2.step_count(), 1);
        assert_ne!(before, p.0);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Scalar(vec![0.0]);
        let mut opt = AdamState::new(AdamConfig::with_lr(0.1), &p);
        opt.step(&mut p, &Scalar(vec![1.0])).unwrap();
        assert!((p.0[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn minimizes_square() {
        let mut p = Scalar(vec![1.0]);
        let mut opt = AdamState::new(AdamConfig::with_lr(0.01), &p);
        for _ in 0..100 {
            let g = 2.0 * p.0[0];
            opt.step(&mut p, &Scalar(vec![g])).unwrap();
        }
        assert!(p.0[0].abs() < 0.5);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = Scalar(vec![1.0]);
        let mut opt = AdamState::new(AdamConfig::default(), &p);
        assert!(opt.step(&mut p, &Scalar(vec![f64::NAN])).is_err());
        assert_eq!(p.0, vec![1.0]);
        assert_eq!(opt.step_count(), 0);
    }
}
