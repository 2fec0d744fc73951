use alloc::vec::Vec;

use super::matrix::Matrix;
use crate::math;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(learning_rate: f64, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect::<Vec<_>>();
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, first: zeros(), second: zeros() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix]) {
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let bc1 = 1.0 - math::powi(self.beta1, self.step as i32);
        let bc2 = 1.0 - math::powi(self.beta2, self.step as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                p.data[i] -= self.learning_rate * m_hat / (math::sqrt(v_hat) + self.epsilon);
            }
        }
    }
}
