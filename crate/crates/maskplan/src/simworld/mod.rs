//! Synthetic egocentric 2D navigation world.
//!
//! A world is a bounded ground plane of 0.5 m terrain cells plus cylindrical
//! obstacles and goal objects. A unicycle robot drives on it, and a pitched
//! pinhole camera renders 64x64 egocentric RGB frames by ray casting. All
//! randomness is hash-derived from the world seed, so rendering the same pose
//! twice produces byte-identical frames.

mod camera;
mod render;
mod world;

pub use camera::{CameraModel, Projected};
pub use render::render;
pub use world::{
    gen_world, ColorName, EntityClass, GoalObject, Obstacle, StateInfo, TerrainClass,
    TerrainGrid, World, WorldGenConfig,
};

use serde::{Deserialize, Serialize};

/// Robot footprint radius in meters. Collision and path-width logic share it.
pub const ROBOT_RADIUS: f64 = 0.25;

/// Planar pose. `theta` is kept normalized to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2D {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    /// Position as a 2-vector.
    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Maps a point given in this pose's frame (x forward, y left) to world
    /// coordinates.
    pub fn local_to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Maps a world point into this pose's frame (rotate by -theta, translate).
    pub fn world_to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }
}

/// One rendered egocentric frame, row-major RGB bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Frame {
    pub fn pixel(&self, u: usize, v: usize) -> [u8; 3] {
        let i = (v * self.width + u) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Luma in [0,1], used by the correlation tracker.
    pub fn luma(&self, u: usize, v: usize) -> f64 {
        let [r, g, b] = self.pixel(u, v);
        (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = a.rem_euclid(tau);
    if r > std::f64::consts::PI {
        r - tau
    } else {
        r
    }
}

/// Forward-Euler unicycle step. Inputs are clamped rather than rejected:
/// |v| <= 1 m/s, |omega| <= 1 rad/s, dt into [0, 0.5] s (dt <= 0 is a no-op).
pub fn step_unicycle(pose: Pose2D, v: f64, omega: f64, dt: f64) -> Pose2D {
    let v = v.clamp(-1.0, 1.0);
    let omega = omega.clamp(-1.0, 1.0);
    let dt = dt.clamp(0.0, 0.5);
    Pose2D {
        x: pose.x + v * pose.theta.cos() * dt,
        y: pose.y + v * pose.theta.sin() * dt,
        theta: normalize_angle(pose.theta + omega * dt),
    }
}

/// FNV-1a over arbitrary bytes; the deterministic hash used for terrain
/// texture, seed derivation, and checkpoint fingerprints.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives a child seed from a base seed and a labeled stream id. Used
/// everywhere a component needs its own RNG stream so that parallel workers
/// produce identical results regardless of scheduling.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    let mut bytes = Vec::with_capacity(label.len() + 16);
    bytes.extend_from_slice(&base.to_le_bytes());
    bytes.extend_from_slice(label.as_bytes());
    bytes.extend_from_slice(&index.to_le_bytes());
    fnv1a(&bytes)
}

/// Uniform in [-1, 1) from a hash of the given ints; terrain texture helper.
pub(crate) fn hash_unit(seed: u64, salt: u64, ix: i64, iy: i64) -> f64 {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&salt.to_le_bytes());
    bytes[16..24].copy_from_slice(&ix.to_le_bytes());
    bytes[24..32].copy_from_slice(&iy.to_le_bytes());
    let h = fnv1a(&bytes);
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn straight_step_advances_along_heading() {
        let p = step_unicycle(Pose2D::new(0.0, 0.0, 0.0), 1.0, 0.0, 0.1);
        assert!((p.x - 0.1).abs() < 1e-15, "x was {}", p.x);
        assert_eq!(p.y, 0.0);
        assert_eq!(p.theta, 0.0);
    }

    #[test]
    fn zero_command_is_identity() {
        let start = Pose2D::new(3.0, -2.0, 1.2);
        let p = step_unicycle(start, 0.0, 0.0, 0.25);
        assert_eq!(p, start);
    }

    #[test]
    fn speed_and_rate_are_clamped() {
        let p = step_unicycle(Pose2D::new(0.0, 0.0, 0.0), 5.0, -9.0, 0.1);
        assert!((p.x - 0.1).abs() < 1e-15, "v should clamp to 1, got x={}", p.x);
        assert!(
            (p.theta - normalize_angle(-0.1)).abs() < 1e-15,
            "omega should clamp to -1"
        );
        // dt clamps to 0.5
        let q = step_unicycle(Pose2D::new(0.0, 0.0, 0.0), 1.0, 0.0, 3.0);
        assert!((q.x - 0.5).abs() < 1e-15);
        // non-positive dt is a no-op
        let r = step_unicycle(Pose2D::new(1.0, 1.0, 0.5), 1.0, 1.0, -0.1);
        assert_eq!(r, Pose2D::new(1.0, 1.0, 0.5));
    }

    #[test]
    fn theta_stays_normalized_across_many_steps() {
        let mut p = Pose2D::new(0.0, 0.0, 3.0);
        for _ in 0..100 {
            p = step_unicycle(p, 0.3, 1.0, 0.5);
            assert!(
                p.theta > -PI && p.theta <= PI,
                "theta {} left (-pi, pi]",
                p.theta
            );
        }
    }

    #[test]
    fn normalize_angle_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn euler_quarter_circle_approaches_analytic_arc() {
        // v=1, omega=1 for pi/2 seconds traces a quarter of a unit circle.
        // Euler at dt=1e-4 should land close to the analytic endpoint (sin t, 1-cos t).
        let mut p = Pose2D::new(0.0, 0.0, 0.0);
        let dt = 1e-4;
        let steps = (PI / 2.0 / dt) as usize;
        for _ in 0..steps {
            p = step_unicycle(p, 1.0, 1.0, dt);
        }
        assert!((p.x - 1.0).abs() < 1e-3, "x={}", p.x);
        assert!((p.y - 1.0).abs() < 1e-3, "y={}", p.y);
    }

    #[test]
    fn local_world_round_trip() {
        let pose = Pose2D::new(2.0, -1.0, 0.7);
        let p = [3.3, 4.4];
        let back = pose.local_to_world(pose.world_to_local(p));
        assert!((back[0] - p[0]).abs() < 1e-12);
        assert!((back[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn hash_unit_is_deterministic_and_bounded() {
        let a = hash_unit(7, 1, -3, 12);
        let b = hash_unit(7, 1, -3, 12);
        assert_eq!(a, b);
        assert!((-1.0..1.0).contains(&a));
        assert_ne!(a, hash_unit(8, 1, -3, 12), "seed must matter");
    }
}
