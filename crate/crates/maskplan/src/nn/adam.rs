//! Adam optimizer with bias-corrected moment estimates.

use super::{PTensor, Scalar};

/// Adam over a fixed, ordered set of parameters. Moment buffers are sized on
/// the first step and keyed by parameter position, so every step must pass
/// the same parameters in the same order.
pub struct Adam<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Apply one update using the gradients currently stored in each
    /// parameter. Gradients are not cleared; callers zero them when they
    /// start accumulating the next batch.
    pub fn step(&mut self, params: &mut [&mut PTensor<S>]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![S::zero(); p.numel()]).collect();
            self.v = params.iter().map(|p| vec![S::zero(); p.numel()]).collect();
        }
        assert_eq!(self.m.len(), params.len(), "parameter set changed between steps");
        self.t += 1;
        let b1 = S::from_f64(self.beta1);
        let b2 = S::from_f64(self.beta2);
        let one = S::one();
        // Bias corrections in f64; they only depend on the step count.
        let c1 = S::from_f64(1.0 / (1.0 - self.beta1.powi(self.t as i32)));
        let c2 = S::from_f64(1.0 / (1.0 - self.beta2.powi(self.t as i32)));
        let lr = S::from_f64(self.lr);
        let eps = S::from_f64(self.eps);
        for (pi, p) in params.iter_mut().enumerate() {
            assert_eq!(self.m[pi].len(), p.numel(), "parameter {pi} resized between steps");
            let m = &mut self.m[pi];
            let v = &mut self.v[pi];
            for i in 0..p.data.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let mhat = m[i] * c1;
                let vhat = v[i] * c2;
                p.data[i] = p.data[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
