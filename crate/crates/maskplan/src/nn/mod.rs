//! Minimal neural-network core: CHW tensors, hand-written layer
//! forward/backward pairs, Adam, and a fingerprinted checkpoint format.
//!
//! Everything is generic over a [`Scalar`] so the same layer code runs in
//! `f32` for training and in `f64` for finite-difference gradient checks.
//! There is no autograd graph: each network composes layer forwards by hand,
//! keeps the caches it needs, and calls the matching backwards in reverse
//! order. Gradients accumulate into [`PTensor::grad`] buffers owned by the
//! parameters themselves, so a whole batch can be pushed through sample by
//! sample before one optimizer step.

mod adam;
mod checkpoint;
mod layers;
mod params;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{
    load_checkpoint, read_header, save_checkpoint, CheckpointError, CheckpointHeader, TensorMeta,
};
pub use layers::{
    avg_pool_bwd, avg_pool_fwd, conv3x3_bwd, conv3x3_fwd, film_bwd, film_fwd, group_norm_bwd,
    group_norm_fwd, linear_bwd, linear_fwd, silu_bwd, silu_fwd, softargmax_bwd, softargmax_fwd,
    time_embedding, upsample2x_bwd, upsample2x_fwd, GroupNormCache, GN_EPS,
};
pub use params::{zero_grads, PTensor};
pub use tensor::Tensor;

use std::fmt::Debug;

/// Floating-point element type for tensors and parameters.
///
/// `f32` is the training and checkpoint precision; `f64` exists so gradient
/// code can be verified against central finite differences at tolerances far
/// below `f32` round-off.
pub trait Scalar: num_traits::Float + Debug + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}
