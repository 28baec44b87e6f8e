//! DDPM noise schedule and the forward (noising) process.

use crate::nn::{Scalar, Tensor};

use super::DiffusionError;

/// Hard cap on schedule length.
pub const MAX_T: usize = 1000;

/// Linear-beta DDPM schedule. Index convention: step `t` is 1-based in the
/// math; `beta[t - 1]` and `alpha_bar[t - 1]` store its values, and
/// `alpha_bar` is the cumulative product of `1 - beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub t_steps: usize,
    pub beta: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// `alpha_bar` at 1-based step `t`; `t = 0` returns 1 (the clean data).
    pub fn alpha_bar_at(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// Signal-to-noise ratio at 1-based step `t`.
    pub fn snr(&self, t: usize) -> f64 {
        let ab = self.alpha_bar_at(t);
        ab / (1.0 - ab)
    }
}

/// Builds a linear beta schedule from `beta_start` to `beta_end` over
/// `t_steps` steps (a single step uses `beta_start`).
pub fn make_schedule(
    t_steps: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<NoiseSchedule, DiffusionError> {
    if t_steps < 1 || t_steps > MAX_T {
        return Err(DiffusionError::InvalidRange(format!(
            "t_steps must be in 1..={MAX_T}, got {t_steps}"
        )));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DiffusionError::InvalidRange(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
        )));
    }
    let mut beta = Vec::with_capacity(t_steps);
    let mut alpha_bar = Vec::with_capacity(t_steps);
    let mut prod = 1.0f64;
    for i in 0..t_steps {
        let frac = if t_steps > 1 {
            i as f64 / (t_steps - 1) as f64
        } else {
            0.0
        };
        let b = beta_start + (beta_end - beta_start) * frac;
        prod *= 1.0 - b;
        beta.push(b);
        alpha_bar.push(prod);
    }
    Ok(NoiseSchedule {
        t_steps,
        beta,
        alpha_bar,
    })
}

/// Forward noising: `y_t = sqrt(alpha_bar_t) * y0 + sqrt(1 - alpha_bar_t) * eps`.
/// `y0` is a mask already scaled to [-1, 1].
pub fn forward_noise<S: Scalar>(
    y0: &Tensor<S>,
    t: usize,
    eps: &Tensor<S>,
    schedule: &NoiseSchedule,
) -> Result<Tensor<S>, DiffusionError> {
    if (eps.c, eps.h, eps.w) != (y0.c, y0.h, y0.w) {
        return Err(DiffusionError::ShapeMismatch(format!(
            "eps shape {}x{}x{} does not match y0 shape {}x{}x{}",
            eps.c, eps.h, eps.w, y0.c, y0.h, y0.w
        )));
    }
    if t < 1 || t > schedule.t_steps {
        return Err(DiffusionError::InvalidRange(format!(
            "step {t} outside 1..={}",
            schedule.t_steps
        )));
    }
    let ab = schedule.alpha_bar_at(t);
    let ca = S::from_f64(ab.sqrt());
    let cb = S::from_f64((1.0 - ab).sqrt());
    let data = y0
        .data
        .iter()
        .zip(&eps.data)
        .map(|(&a, &e)| ca * a + cb * e)
        .collect();
    Ok(Tensor::from_vec(y0.c, y0.h, y0.w, data))
}

/// Coefficients of the DDPM posterior `q(y_s | y_t, y0)` for `0 <= s < t`,
/// expressed through `alpha_bar` only so they also serve the strided
/// sampler: returns `(coef_y0, coef_yt, variance)` with
/// `mean = coef_y0 * y0 + coef_yt * y_t`.
pub fn posterior_coeffs(schedule: &NoiseSchedule, t: usize, s: usize) -> (f64, f64, f64) {
    assert!(s < t && t <= schedule.t_steps, "need 0 <= s < t <= T");
    let ab_t = schedule.alpha_bar_at(t);
    let ab_s = schedule.alpha_bar_at(s);
    let ratio = ab_t / ab_s; // product of alphas over (s, t]
    let coef_y0 = ab_s.sqrt() * (1.0 - ratio) / (1.0 - ab_t);
    let coef_yt = ratio.sqrt() * (1.0 - ab_s) / (1.0 - ab_t);
    let var = (1.0 - ab_s) / (1.0 - ab_t) * (1.0 - ratio);
    (coef_y0, coef_yt, var)
}

/// Evenly strided, strictly decreasing subset of `1..=T` with `steps`
/// entries, ending at the smallest stride above zero; used by the sampler.
pub fn strided_steps(t_steps: usize, steps: usize) -> Vec<usize> {
    assert!(steps >= 1 && steps <= t_steps, "need 1 <= steps <= T");
    let mut out = Vec::with_capacity(steps);
    for i in 0..steps {
        // steps evenly spaced fractions of T, from T down.
        let t = ((t_steps as f64) * (steps - i) as f64 / steps as f64).round() as usize;
        out.push(t.max(1));
    }
    for w in out.windows(2) {
        assert!(w[0] > w[1], "strided steps must strictly decrease: {out:?}");
    }
    out
}
