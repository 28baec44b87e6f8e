//! Expert demonstrations: grid A* planning, waypoint resampling, caption
//! templates, episode rollout, and dataset IO.
//!
//! The data flow is: sample a world and a task, plan an expert path with
//! [`astar::plan_expert_path`], drive the path with the sampling controller
//! while rendering egocentric frames, caption the task, and write everything
//! to disk as a self-describing dataset directory.

pub mod astar;
pub mod caption;
pub mod dataset;
pub mod episode;
pub mod waypoints;

pub use astar::{plan_expert_path, PlanError, PlanGrid};
pub use caption::{caption_task, decode, null_instruction, token_id, tokenize, vocab, CaptionError};
pub use dataset::{
    assemble_manifest, read_dataset, read_episode, write_dataset, write_episode, Dataset,
    DatasetError, Manifest, ManifestEpisode,
};
pub use episode::{
    episode_from_polyline, gen_dataset, gen_episode_by_index, generate_episode, DataGenConfig,
    Episode, EpisodeParams, GenError, LabelMeta, EXPERT_DT, EXPERT_GOAL_DIST, FRAME_PERIOD,
};
pub use waypoints::waypoints_from_path;

use crate::simworld::{EntityClass, TerrainClass};
use serde::{Deserialize, Serialize};

/// Number of waypoints produced per plan.
pub const N_WAYPOINTS: usize = 8;
/// Arc-length spacing between consecutive waypoints, meters.
pub const WAYPOINT_SPACING: f64 = 0.4;
/// A plan's terminal waypoint therefore sits 3.2 m down the path.
pub const WAYPOINT_HORIZON: f64 = WAYPOINT_SPACING * N_WAYPOINTS as f64;

/// Eight robot-frame waypoints, each (x forward, y left, z up = 0).
pub type Waypoints = [[f64; 3]; N_WAYPOINTS];

/// What the robot is being asked to do, beyond reaching `Task::goal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    /// Reach the object at this index in `World::objects`.
    GoTo { object: usize },
    /// Reach the goal while keeping clear of every obstacle of this class.
    Avoid { class: EntityClass },
    /// Reach the goal while staying at least `margin` meters from the object.
    KeepDistance { object: usize, margin: f64 },
    /// Reach the goal while staying on the preferred terrain.
    TerrainPref { prefer: TerrainClass },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    #[serde(flatten)]
    pub kind: TaskKind,
    pub goal: [f64; 2],
}

/// A natural-language command plus its token ids. The null instruction is
/// the empty string tokenized as the single `<null>` token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub tokens: Vec<u16>,
    pub is_null: bool,
}

/// Seen/unseen palette split for generalization experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Seen,
    Unseen,
}

/// Train/test role within a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Seen => write!(f, "seen"),
            Split::Unseen => write!(f, "unseen"),
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::Train => write!(f, "train"),
            Role::Test => write!(f, "test"),
        }
    }
}

/// Rounds to 9 significant decimal digits. Poses and actions are quantized
/// with this at episode construction so the CSV round trip is lossless.
pub fn sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.8e}", x).parse().expect("sig9 reparse")
}

/// Formats a value already quantized by [`sig9`]; parsing the result yields
/// the input bit for bit.
pub fn fmt_sig9(x: f64) -> String {
    format!("{:.8e}", x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_round_trips_through_text() {
        for &x in &[
            0.0,
            1.0,
            -0.25,
            std::f64::consts::PI,
            1.0 / 3.0,
            -9.448342072027407,
            1e-12,
            123456.789,
        ] {
            let q = sig9(x);
            let s = fmt_sig9(q);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), q.to_bits(), "{} -> {} -> {}", x, s, back);
            // Quantization is idempotent.
            assert_eq!(sig9(q).to_bits(), q.to_bits());
        }
    }

    #[test]
    fn sig9_keeps_nine_digits() {
        assert_eq!(sig9(std::f64::consts::PI), 3.14159265);
        assert_eq!(sig9(-0.000123456789123), -0.000123456789);
    }

    #[test]
    fn task_json_round_trip() {
        let t = Task {
            kind: TaskKind::KeepDistance {
                object: 1,
                margin: 1.0,
            },
            goal: [3.0, -2.5],
        };
        let s = serde_json::to_string(&t).unwrap();
        let back: Task = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(s.contains("keep_distance"), "tagged repr: {}", s);
    }
}
