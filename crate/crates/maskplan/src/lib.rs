//! maskplan: task-conditioned visual navigation at desk scale.
//!
//! The crate implements a complete, self-contained pipeline:
//!
//! * [`simworld`] - synthetic egocentric 2D navigation simulator (unicycle
//!   dynamics, pinhole camera, ray-cast renderer, byte-deterministic).
//! * [`expertdata`] - expert demonstration generator (A* planner, waypoint
//!   resampling, templated captions over a closed vocabulary, dataset IO).
//! * [`autolabel`] - reverse-video breadcrumb auto-labeler that turns raw
//!   drives into ground-truth path masks (oracle and correlation trackers).
//! * [`nn`] - small scalar-generic tensor/layer core with hand-written
//!   backward passes, Adam, and a fingerprinted checkpoint format.
//! * [`diffusion`] - conditional pixel-space diffusion planner (DDPM forward
//!   process, epsilon-prediction U-Net, classifier-free guidance sampling).
//! * [`grounding`] - image-plan-to-metric-waypoint policy (residual encoder,
//!   spatial soft-argmax, trained against plans sampled from a frozen planner).
//! * [`controller`] - sampling-based receding-horizon waypoint tracker.
//! * [`evalharness`] - closed-loop trial judge, open-loop metrics, benchmark
//!   runner, and the pretraining ablation.
//! * [`cli`] - configuration and the subcommand entry points used by the
//!   `maskplan` binary.
//!
//! Every capability has a runnable demo under `examples/`; start with
//! `cargo run --release --example render_scene`.

pub mod autolabel;
pub mod cli;
pub mod controller;
pub mod diffusion;
pub mod evalharness;
pub mod expertdata;
pub mod grounding;
pub mod nn;
pub mod pnm;
pub mod simworld;

pub use autolabel::PathMask;
pub use simworld::{CameraModel, Frame, Pose2D, World};
