use crate::error::{Error, Result};

/// Adam with bias correction, minimizing whatever it is handed.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::arg("learning rate must be positive"));
        }
        Ok(Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One descent step on `params` along the loss gradient `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }

    /// Ascent step: follows `grad` of an objective being maximized.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        self.step(params, &neg);
    }
}
