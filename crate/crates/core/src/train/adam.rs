use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

/// Adam with bias correction. Moments are kept in `f64` whatever the
/// parameter precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

pub const DEFAULT_LEARNING_RATE: f64 = 5e-4;

impl Adam {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step<T: Float>(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient shape mismatch");
        self.steps += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.steps.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - b2.powi(self.steps.min(i32::MAX as u64) as i32);
        let step = self.learning_rate / c1;
        for i in 0..params.len() {
            let g = grads[i].to_f64().unwrap_or(0.0);
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let denom = crate::math::sqrt(self.v[i] / c2) + self.epsilon;
            let p = params[i].to_f64().unwrap() - step * self.m[i] / denom;
            params[i] = T::from(p).unwrap();
        }
    }
}
