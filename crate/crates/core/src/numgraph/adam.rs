use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with bias correction and coupled (L2-in-gradient) weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zeroed moments for parameters of the given shapes, with the usual
    /// `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
    pub fn new(shapes: &[[usize; 2]], learning_rate: f64, weight_decay: f64) -> Self {
        let zeros = || shapes.iter().map(|s| Tensor::zeros(s[0], s[1])).collect();
        AdamState {
            step_count: 0,
            first_moment: zeros(),
            second_moment: zeros(),
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                [params.len(), grads.len()],
                [self.first_moment.len(), 1],
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.shape() != g.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
            if p.shape() != m.shape() {
                return Err(Error::shape("adam_step", p.shape(), m.shape()));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let correct1 = 1.0 - self.beta1.powi(t);
        let correct2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (k, theta) in p.data_mut().iter_mut().enumerate() {
                let g = grads[i].data()[k] + self.weight_decay * *theta;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m[k] / correct1;
                let v_hat = v[k] / correct2;
                *theta -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
