//! Pitched pinhole camera.
//!
//! Camera frame follows the usual computer-vision convention: +Z along the
//! optical axis, +X image-right, +Y image-down. The camera sits `cam_height`
//! above the robot origin and is pitched down by `pitch` radians from the
//! robot's heading. Image coordinates are continuous; pixel (i, j) covers
//! [i, i+1) x [j, j+1) with its center at (i+0.5, j+0.5).

use super::Pose2D;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera height above the ground plane, meters.
    pub cam_height: f64,
    /// Downward pitch from horizontal, radians.
    pub pitch: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            fx: 64.0,
            fy: 64.0,
            cx: 32.0,
            cy: 32.0,
            width: 64,
            height: 64,
            cam_height: 0.5,
            pitch: 0.3,
        }
    }
}

/// Result of projecting a world point into the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projected {
    /// Continuous pixel coordinates, 0 <= u < width, 0 <= v < height.
    Visible { u: f64, v: f64 },
    /// Behind the camera or outside the image bounds.
    NotVisible,
}

impl Projected {
    pub fn visible(&self) -> Option<(f64, f64)> {
        match *self {
            Projected::Visible { u, v } => Some((u, v)),
            Projected::NotVisible => None,
        }
    }
}

impl CameraModel {
    /// Camera coordinates (X right, Y down, Z forward) of a robot-frame 3D
    /// point. The robot frame is x forward, y left, z up.
    pub fn robot_to_camera(&self, q: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.pitch.sin_cos();
        let d = [q[0], q[1], q[2] - self.cam_height];
        [
            -d[1],                    // X: robot -y is image right
            -d[0] * s - d[2] * c,     // Y: down mixes forward and world -z
            d[0] * c - d[2] * s,      // Z: forward along the pitched axis
        ]
    }

    /// Raw projection of a robot-frame ground point (z=0), without bounds
    /// checking. Returns None when the point is at or behind the camera plane.
    pub fn project_raw(&self, q: [f64; 2]) -> Option<(f64, f64)> {
        let [xc, yc, zc] = self.robot_to_camera([q[0], q[1], 0.0]);
        if zc <= 1e-9 {
            return None;
        }
        Some((self.cx + self.fx * xc / zc, self.cy + self.fy * yc / zc))
    }

    /// Projects a world ground point into the frame rendered from `pose`.
    pub fn project_ground(&self, pose: Pose2D, p: [f64; 2]) -> Projected {
        let q = pose.world_to_local(p);
        match self.project_raw(q) {
            Some((u, v))
                if u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64 =>
            {
                Projected::Visible { u, v }
            }
            _ => Projected::NotVisible,
        }
    }

    /// World-frame ray through continuous image coordinates (u, v): returns
    /// (origin, direction). Direction is not normalized.
    pub fn pixel_ray(&self, pose: Pose2D, u: f64, v: f64) -> ([f64; 3], [f64; 3]) {
        let (sp, cp) = self.pitch.sin_cos();
        let (st, ct) = pose.theta.sin_cos();
        // Camera basis in world coordinates.
        let x_axis = [st, -ct, 0.0];
        let y_axis = [-sp * ct, -sp * st, -cp];
        let z_axis = [cp * ct, cp * st, -sp];
        let a = (u - self.cx) / self.fx;
        let b = (v - self.cy) / self.fy;
        let dir = [
            a * x_axis[0] + b * y_axis[0] + z_axis[0],
            a * x_axis[1] + b * y_axis[1] + z_axis[1],
            a * x_axis[2] + b * y_axis[2] + z_axis[2],
        ];
        ([pose.x, pose.y, self.cam_height], dir)
    }

    /// Ground intersection of the ray through (u, v), or None when the ray
    /// points at or above the horizon.
    pub fn ray_to_ground(&self, pose: Pose2D, u: f64, v: f64) -> Option<[f64; 2]> {
        let (origin, dir) = self.pixel_ray(pose, u, v);
        if dir[2] >= -1e-12 {
            return None;
        }
        let t = origin[2] / -dir[2];
        Some([origin[0] + t * dir[0], origin[1] + t * dir[1]])
    }

    /// Forward ground distance (robot frame x) whose projection lands on
    /// image row `v`, or None when that row is above the horizon.
    pub fn ground_distance_for_row(&self, v: f64) -> Option<f64> {
        let (s, c) = self.pitch.sin_cos();
        let k = (v - self.cy) / self.fy;
        let denom = k * c + s;
        if denom <= 1e-12 {
            return None;
        }
        let d = self.cam_height * (c - k * s) / denom;
        if d <= 0.0 {
            None
        } else {
            Some(d)
        }
    }

    /// Inverse of [`Self::ground_distance_for_row`]: the image row on which
    /// a ground point `dist` meters straight ahead projects.
    pub fn row_for_ground_distance(&self, dist: f64) -> f64 {
        let (s, c) = self.pitch.sin_cos();
        let y = -dist * s + self.cam_height * c;
        let z = dist * c + self.cam_height * s;
        self.cy + self.fy * y / z
    }

    /// Depth (camera Z) of the ground point `dist` meters ahead of the robot.
    pub fn ground_depth(&self, dist: f64) -> f64 {
        let (s, c) = self.pitch.sin_cos();
        dist * c + self.cam_height * s
    }

    /// Projected half-width in pixels of the robot footprint centered at a
    /// ground point `dist` meters ahead.
    pub fn footprint_halfwidth_px(&self, dist: f64) -> f64 {
        self.fx * super::ROBOT_RADIUS / self.ground_depth(dist)
    }

    /// Image row of the horizon (ground visible strictly below it).
    pub fn horizon_row(&self) -> f64 {
        self.cy - self.fy * self.pitch.tan()
    }
}
