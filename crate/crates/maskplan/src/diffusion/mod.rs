//! π_plan: a conditional pixel-space denoising diffusion model that turns
//! (frame, instruction) into a PathMask visual plan.
//!
//! The pieces: a linear-beta DDPM [`NoiseSchedule`]; a bag-of-tokens
//! instruction embedding with a dedicated learned null row; the [`Denoiser`]
//! network conditioned on time and goal through FiLM; a seeded trainer with
//! classifier-free conditioning dropout, so one model serves both the
//! instruction-conditioned and the task-agnostic planner; and a strided
//! ancestral sampler with classifier-free guidance.

mod net;
mod sample;
mod schedule;
mod train;

pub use net::{
    denoise_step_net, load_planner, save_planner, Denoiser, EmbedCache, GoalEmbedding,
    InputGrads, NetCache, COND_DIM, GOAL_DIM, TIME_DIM, WIDTHS,
};
pub use sample::{guided_eps, sample_plan, sample_plan_tensor, SampleConfig};
pub use schedule::{
    forward_noise, make_schedule, posterior_coeffs, strided_steps, NoiseSchedule, MAX_T,
};
pub use train::{
    collect_train_items, loss_plan, mask_to_tensor, rgb_to_tensor, train_planner,
    PlannerTrainConfig, TrainItem, TrainReport,
};

use crate::nn::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("token id {0} is not in the vocabulary")]
    UnknownToken(u16),
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("dataset has no trainable frames")]
    EmptyTrainingSet,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
