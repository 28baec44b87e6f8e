//! Strided ancestral DDPM sampling with classifier-free guidance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autolabel::PathMask;
use crate::nn::{Scalar, Tensor};
use crate::simworld::Frame;

use super::train::{randn_tensor, rgb_to_tensor};
use super::{posterior_coeffs, strided_steps, Denoiser, DiffusionError, NoiseSchedule};

/// Sampler knobs. Twenty strided steps and a guidance weight of 3 are the
/// operating point everywhere downstream.
#[derive(Debug, Clone, Copy)]
pub struct SampleConfig {
    pub steps: usize,
    pub guidance_w: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            steps: 20,
            guidance_w: 3.0,
        }
    }
}

/// Classifier-free guidance combine: `eps_null + w * (eps_cond - eps_null)`.
/// Affine in `w`; the sampler never calls it at w = 0 or w = 1, where one of
/// the two evaluations is skipped instead.
pub fn guided_eps<S: Scalar>(eps_null: &Tensor<S>, eps_cond: &Tensor<S>, w: f64) -> Tensor<S> {
    assert_eq!(eps_null.data.len(), eps_cond.data.len());
    let ws = S::from_f64(w);
    let mut out = eps_null.zeros_like();
    for i in 0..out.data.len() {
        out.data[i] = eps_null.data[i] + ws * (eps_cond.data[i] - eps_null.data[i]);
    }
    out
}

/// Core sampler on tensors: start from seeded unit noise and walk the
/// strided schedule down to a clean plan in [0, 1].
///
/// Per step: predict noise (guided when 0 < w and w != 1), form the clamped
/// x0 estimate, then draw the posterior sample for the next retained step.
/// The final hop to s = 0 returns the x0 estimate exactly, with no noise
/// draw, so a run's rng consumption is `h*w * steps` normal draws. At w = 1
/// the null branch is skipped entirely and the result is bitwise identical
/// to conditional-only sampling; at w = 0 only the null branch runs.
pub fn sample_plan_tensor<S: Scalar>(
    net: &Denoiser<S>,
    rgb: &Tensor<S>,
    tokens: &[u16],
    schedule: &NoiseSchedule,
    steps: usize,
    guidance_w: f64,
    seed: u64,
) -> Result<Tensor<S>, DiffusionError> {
    if steps < 1 || steps > schedule.t_steps {
        return Err(DiffusionError::InvalidRange(format!(
            "steps must be in 1..={}, got {steps}",
            schedule.t_steps
        )));
    }
    if !guidance_w.is_finite() || guidance_w < 0.0 {
        return Err(DiffusionError::InvalidRange(format!(
            "guidance_w must be finite and >= 0, got {guidance_w}"
        )));
    }
    let ts = strided_steps(schedule.t_steps, steps);
    let goal = net.embed_instruction(tokens)?;
    let null = if guidance_w == 1.0 {
        None
    } else {
        Some(net.embed_instruction(&[0])?)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = randn_tensor::<S>(&mut rng, 1, rgb.h, rgb.w);
    let (low, high) = (S::from_f64(-1.0), S::from_f64(1.0));

    for i in 0..ts.len() {
        let t = ts[i];
        let s = if i + 1 < ts.len() { ts[i + 1] } else { 0 };
        let eps_hat = if guidance_w == 1.0 {
            net.forward(&y, rgb, &goal, t).0
        } else if guidance_w == 0.0 {
            net.forward(&y, rgb, null.as_ref().unwrap(), t).0
        } else {
            let ec = net.forward(&y, rgb, &goal, t).0;
            let en = net.forward(&y, rgb, null.as_ref().unwrap(), t).0;
            guided_eps(&en, &ec, guidance_w)
        };

        let ab_t = schedule.alpha_bar_at(t);
        let k_eps = S::from_f64((1.0 - ab_t).sqrt());
        let k_inv = S::from_f64(1.0 / ab_t.sqrt());
        let mut x0 = y.zeros_like();
        for j in 0..x0.data.len() {
            let v = (y.data[j] - k_eps * eps_hat.data[j]) * k_inv;
            x0.data[j] = v.max(low).min(high);
        }

        if s == 0 {
            y = x0;
        } else {
            let (c0, ct, var) = posterior_coeffs(schedule, t, s);
            let (c0, ct, sd) = (
                S::from_f64(c0),
                S::from_f64(ct),
                S::from_f64(var.sqrt()),
            );
            let z = randn_tensor::<S>(&mut rng, 1, y.h, y.w);
            for j in 0..y.data.len() {
                y.data[j] = c0 * x0.data[j] + ct * y.data[j] + sd * z.data[j];
            }
        }
    }

    let (zero, one) = (S::from_f64(0.0), S::from_f64(1.0));
    let half = S::from_f64(0.5);
    for v in y.data.iter_mut() {
        *v = ((*v + one) * half).max(zero).min(one);
    }
    Ok(y)
}

/// Samples a visual plan for a camera frame; the mask has the frame's
/// resolution.
pub fn sample_plan(
    net: &Denoiser<f32>,
    frame: &Frame,
    tokens: &[u16],
    schedule: &NoiseSchedule,
    steps: usize,
    guidance_w: f64,
    seed: u64,
) -> Result<PathMask, DiffusionError> {
    let rgb = rgb_to_tensor::<f32>(frame);
    let plan = sample_plan_tensor(net, &rgb, tokens, schedule, steps, guidance_w, seed)?;
    let mut mask = PathMask::new(frame.width, frame.height);
    for (d, &v) in mask.data.iter_mut().zip(plan.data.iter()) {
        *d = v;
    }
    Ok(mask)
}
