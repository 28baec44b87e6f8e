//! The diffusion objective with classifier-free conditioning dropout, and
//! the seeded training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autolabel::PathMask;
use crate::expertdata::{Episode, Role};
use crate::nn::{Adam, Scalar, Tensor};
use crate::simworld::{derive_seed, Frame};

use super::{forward_noise, make_schedule, Denoiser, DiffusionError, NoiseSchedule};

/// Losses for this objective are bounded near 1 by construction: targets are
/// unit-variance noise and healthy predictions stay on that scale, so a
/// batch-mean loss four decades above it means training has left the regime
/// where the arithmetic carries information. Group normalization keeps the
/// activations themselves finite at almost any learning rate, so divergence
/// is detected against this guard rather than waiting for inf or NaN.
const DIVERGE_GUARD: f64 = 1e4;

/// One trainable frame: mask and rgb scaled to [-1, 1], plus the caption.
#[derive(Debug, Clone)]
pub struct TrainItem<S> {
    pub y0: Tensor<S>,
    pub rgb: Tensor<S>,
    pub tokens: Vec<u16>,
    /// Task-agnostic frames always train against the null token.
    pub always_null: bool,
}

/// PathMask ([0,1] likelihood) to a 1-channel tensor in [-1, 1].
pub fn mask_to_tensor<S: Scalar>(mask: &PathMask) -> Tensor<S> {
    let data = mask
        .data
        .iter()
        .map(|&v| S::from_f64(v as f64 * 2.0 - 1.0))
        .collect();
    Tensor::from_vec(1, mask.height, mask.width, data)
}

/// Interleaved rgb bytes to a 3-channel tensor in [-1, 1].
pub fn rgb_to_tensor<S: Scalar>(frame: &Frame) -> Tensor<S> {
    let (h, w) = (frame.height, frame.width);
    let mut t = Tensor::zeros(3, h, w);
    for y in 0..h {
        for x in 0..w {
            let px = frame.pixel(x, y);
            for c in 0..3 {
                t.data[(c * h + y) * w + x] = S::from_f64(px[c] as f64 / 255.0 * 2.0 - 1.0);
            }
        }
    }
    t
}

/// Standard-normal tensor; draws are made in f64 in row-major order so the
/// stream is identical for f32 and f64 instantiations.
pub(crate) fn randn_tensor<S: Scalar>(
    rng: &mut ChaCha8Rng,
    c: usize,
    h: usize,
    w: usize,
) -> Tensor<S> {
    let data = (0..c * h * w)
        .map(|_| S::from_f64(rng.sample(StandardNormal)))
        .collect();
    Tensor::from_vec(c, h, w, data)
}

/// Mean squared error between the drawn and predicted noise, with the
/// gradient with respect to the prediction.
pub(crate) fn eps_loss<S: Scalar>(eps: &Tensor<S>, eps_hat: &Tensor<S>) -> (f64, Tensor<S>) {
    assert_eq!(eps.data.len(), eps_hat.data.len(), "eps shape mismatch");
    let n = eps.data.len() as f64;
    let mut loss = 0.0f64;
    let mut grad = eps_hat.zeros_like();
    for i in 0..eps.data.len() {
        let d = (eps_hat.data[i] - eps.data[i]).to_f64();
        loss += d * d;
        grad.data[i] = S::from_f64(2.0 * d / n);
    }
    (loss / n, grad)
}

/// Flattens labeled episodes into training items: every train-role frame
/// whose fitted mask is non-empty. `unconditional` marks every item as
/// always-null (the pretraining mode, which never sees captions).
pub fn collect_train_items<S: Scalar>(episodes: &[Episode], unconditional: bool) -> Vec<TrainItem<S>> {
    let mut items = Vec::new();
    for ep in episodes {
        if ep.role != Role::Train {
            continue;
        }
        let Some(masks) = &ep.masks else { continue };
        for (f, mask) in masks.iter().enumerate() {
            let empty = ep
                .labels
                .as_ref()
                .map(|l| l.empty_mask[f])
                .unwrap_or_else(|| mask.is_empty());
            if empty {
                continue;
            }
            items.push(TrainItem {
                y0: mask_to_tensor(mask),
                rgb: rgb_to_tensor(&ep.frames[f]),
                tokens: ep.instruction.tokens.clone(),
                always_null: ep.instruction.is_null || unconditional,
            });
        }
    }
    items
}

/// One batch of the diffusion objective. Per sample: draw `t` uniformly from
/// `1..=T` and a standard-normal noise field, replace the caption with the
/// null token with probability `drop_prob` (always, for task-agnostic
/// items), and accumulate gradients of `mean ||eps - eps_hat||^2` into the
/// network. Returns the batch-mean loss.
pub fn loss_plan<S: Scalar>(
    net: &mut Denoiser<S>,
    batch: &[&TrainItem<S>],
    schedule: &NoiseSchedule,
    drop_prob: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    assert!(!batch.is_empty(), "batch must be nonempty");
    assert!((0.0..1.0).contains(&drop_prob) || drop_prob == 1.0);
    let inv_b = S::from_f64(1.0 / batch.len() as f64);
    let mut total = 0.0f64;
    for item in batch {
        let t = rng.gen_range(1..=schedule.t_steps);
        let eps = randn_tensor::<S>(rng, item.y0.c, item.y0.h, item.y0.w);
        // One coin per sample regardless of the outcome keeps the noise
        // stream aligned across drop_prob settings.
        let coin: f64 = rng.gen();
        let use_null = item.always_null || coin < drop_prob;
        let tokens: &[u16] = if use_null { &[0] } else { &item.tokens };
        let (goal, ecache) = net
            .embed_instruction_cached(tokens)
            .expect("dataset tokens are in the vocabulary");
        let y_t = forward_noise(&item.y0, t, &eps, schedule).expect("shapes match");
        let (eps_hat, cache) = net.forward(&y_t, &item.rgb, &goal, t);
        let (loss, mut dhat) = eps_loss(&eps, &eps_hat);
        for v in dhat.data.iter_mut() {
            *v = *v * inv_b;
        }
        let grads = net.backward(&cache, &dhat);
        net.embed_bwd(&ecache, &grads.d_goal);
        total += loss;
    }
    total / batch.len() as f64
}

/// Training knobs for π_plan.
#[derive(Debug, Clone)]
pub struct PlannerTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub drop_prob: f64,
    pub seed: u64,
    /// Stop after this many optimizer steps; 0 means epochs alone decide.
    pub max_steps: usize,
    /// Print a loss line per epoch.
    pub log: bool,
}

impl Default for PlannerTrainConfig {
    fn default() -> Self {
        PlannerTrainConfig {
            epochs: 40,
            lr: 2e-3,
            batch: 4,
            t_steps: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
            drop_prob: 0.05,
            seed: 0,
            max_steps: 0,
            log: false,
        }
    }
}

/// Loss trace of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Seeded mini-batch training. `init` continues from existing parameters
/// (the pretraining hand-off); otherwise parameters are freshly initialized
/// from the config seed. Returns the trained network, the schedule it was
/// trained against, and the loss trace.
pub fn train_planner(
    items: &[TrainItem<f32>],
    cfg: &PlannerTrainConfig,
    init: Option<Denoiser<f32>>,
) -> Result<(Denoiser<f32>, NoiseSchedule, TrainReport), DiffusionError> {
    if items.is_empty() {
        return Err(DiffusionError::EmptyTrainingSet);
    }
    let schedule = make_schedule(cfg.t_steps, cfg.beta_start, cfg.beta_end)?;
    let mut net = init.unwrap_or_else(|| Denoiser::new(derive_seed(cfg.seed, "planner-init", 0)));
    let mut adam = Adam::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "planner-train", 0));
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut report = TrainReport::default();

    'epochs: for epoch in 0..cfg.epochs {
        // Fisher-Yates reshuffle each epoch.
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_sum = 0.0f64;
        let mut epoch_n = 0usize;
        for chunk in order.chunks(cfg.batch.max(1)) {
            let batch: Vec<&TrainItem<f32>> = chunk.iter().map(|&i| &items[i]).collect();
            net.zero_grads();
            let loss = loss_plan(&mut net, &batch, &schedule, cfg.drop_prob, &mut rng);
            if !loss.is_finite() || loss > DIVERGE_GUARD {
                return Err(DiffusionError::Diverged {
                    step: report.steps + 1,
                    loss,
                });
            }
            adam.step(&mut net.params_mut());
            report.step_losses.push(loss);
            report.steps += 1;
            epoch_sum += loss;
            epoch_n += 1;
            if cfg.max_steps > 0 && report.steps >= cfg.max_steps {
                report.epoch_losses.push(epoch_sum / epoch_n as f64);
                if cfg.log {
                    println!(
                        "epoch {:>4}  loss {:.6}  (stopped at step cap {})",
                        epoch,
                        epoch_sum / epoch_n as f64,
                        cfg.max_steps
                    );
                }
                break 'epochs;
            }
        }
        let avg = epoch_sum / epoch_n.max(1) as f64;
        report.epoch_losses.push(avg);
        if cfg.log {
            println!("epoch {:>4}  loss {:.6}", epoch, avg);
        }
    }
    Ok((net, schedule, report))
}
