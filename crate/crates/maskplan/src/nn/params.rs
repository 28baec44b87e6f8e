//! Named, shape-tagged parameter tensors with paired gradient buffers.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Scalar;

/// One learnable parameter: a flat value buffer plus a same-sized gradient
/// buffer that layer backwards accumulate into.
///
/// The `name` and `shape` are what the checkpoint format records; networks
/// expose their parameters as an ordered list of these, and that order is
/// the serialization order.
#[derive(Debug, Clone)]
pub struct PTensor<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
    pub grad: Vec<S>,
}

impl<S: Scalar> PTensor<S> {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        PTensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: vec![S::zero(); n],
            grad: vec![S::zero(); n],
        }
    }

    pub fn full(name: &str, shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(name, shape);
        t.data.fill(S::from_f64(value));
        t
    }

    /// He-normal initialization: `N(0, 2 / fan_in)`. Draws are made in `f64`
    /// so `f32` and `f64` nets built from the same seed hold the same values
    /// up to rounding.
    pub fn he<R: Rng>(name: &str, shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let mut t = Self::zeros(name, shape);
        for v in t.data.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = S::from_f64(z * std);
        }
        t
    }

    /// Plain normal initialization with the given standard deviation (used
    /// for embedding tables, where He fan-in scaling has no meaning).
    pub fn normal<R: Rng>(name: &str, shape: &[usize], std: f64, rng: &mut R) -> Self {
        let mut t = Self::zeros(name, shape);
        for v in t.data.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = S::from_f64(z * std);
        }
        t
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }
}

/// Clear the gradient buffers of every listed parameter.
pub fn zero_grads<S: Scalar>(params: &mut [&mut PTensor<S>]) {
    for p in params.iter_mut() {
        p.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn he_init_matches_requested_scale_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t: PTensor<f64> = PTensor::he("w", &[64, 32, 3, 3], 32 * 9, &mut rng);
        assert_eq!(t.numel(), 64 * 32 * 9);
        let mean: f64 = t.data.iter().sum::<f64>() / t.numel() as f64;
        let var: f64 = t.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / t.numel() as f64;
        let want = 2.0 / (32.0 * 9.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!(
            (var - want).abs() / want < 0.1,
            "var {var} vs expected {want}"
        );

        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let t2: PTensor<f64> = PTensor::he("w", &[64, 32, 3, 3], 32 * 9, &mut rng2);
        assert_eq!(t.data, t2.data);
    }

    #[test]
    fn f32_and_f64_draws_agree_up_to_rounding() {
        let mut ra = ChaCha8Rng::seed_from_u64(3);
        let mut rb = ChaCha8Rng::seed_from_u64(3);
        let a: PTensor<f32> = PTensor::he("w", &[8, 8], 8, &mut ra);
        let b: PTensor<f64> = PTensor::he("w", &[8, 8], 8, &mut rb);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((*x as f64 - y).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_grad_clears() {
        let mut t: PTensor<f32> = PTensor::full("g", &[4], 1.0);
        t.grad.fill(5.0);
        t.zero_grad();
        assert!(t.grad.iter().all(|&g| g == 0.0));
    }
}
