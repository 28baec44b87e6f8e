//! Arc-length waypoint resampling.
//!
//! Supervision and grounding both speak in 8 robot-frame waypoints spaced
//! 0.4 m apart along the expert path, starting from the point on the path
//! closest to the robot. Paths shorter than the 3.2 m horizon pad with the
//! final vertex, so a robot near the goal learns to converge and stop.

use super::{Waypoints, N_WAYPOINTS, WAYPOINT_SPACING};
use crate::simworld::Pose2D;

/// Cumulative arc length at each vertex of a polyline.
fn cumlen(path: &[[f64; 2]]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(path.len());
    let mut s = 0.0;
    cum.push(0.0);
    for w in path.windows(2) {
        s += ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        cum.push(s);
    }
    cum
}

/// Arc position along the polyline of the point closest to `p`.
fn closest_arc(path: &[[f64; 2]], cum: &[f64], p: [f64; 2]) -> f64 {
    if path.len() == 1 {
        return 0.0;
    }
    let mut best = (f64::INFINITY, 0.0);
    for (i, w) in path.windows(2).enumerate() {
        let ab = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
        let ap = [p[0] - w[0][0], p[1] - w[0][1]];
        let denom = ab[0] * ab[0] + ab[1] * ab[1];
        let t = if denom > 0.0 {
            ((ap[0] * ab[0] + ap[1] * ab[1]) / denom).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [w[0][0] + t * ab[0], w[0][1] + t * ab[1]];
        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        if d2 < best.0 {
            best = (d2, cum[i] + t * (cum[i + 1] - cum[i]));
        }
    }
    best.1
}

/// Point at arc position `s` along the polyline, clamped to its ends.
pub fn point_at_arc(path: &[[f64; 2]], cum: &[f64], s: f64) -> [f64; 2] {
    let total = *cum.last().unwrap();
    if s <= 0.0 || path.len() == 1 {
        return path[0];
    }
    if s >= total {
        return *path.last().unwrap();
    }
    // cum is sorted; find the segment containing s.
    let mut i = match cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
        Ok(i) => i,
        Err(i) => i - 1,
    };
    if i >= path.len() - 1 {
        i = path.len() - 2;
    }
    let seg = cum[i + 1] - cum[i];
    let t = if seg > 0.0 { (s - cum[i]) / seg } else { 0.0 };
    [
        path[i][0] + t * (path[i + 1][0] - path[i][0]),
        path[i][1] + t * (path[i + 1][1] - path[i][1]),
    ]
}

/// The stretch of path from the point closest to `p` to `ahead` meters
/// further along, as a world-frame polyline. This is what the expert tracker
/// hands the controller, mirroring the 3.2 m horizon the learned stack sees.
pub fn path_window(path: &[[f64; 2]], p: [f64; 2], ahead: f64) -> Vec<[f64; 2]> {
    assert!(!path.is_empty());
    if path.len() == 1 {
        return path.to_vec();
    }
    let cum = cumlen(path);
    let s0 = closest_arc(path, &cum, p);
    let s1 = s0 + ahead;
    let mut out = vec![point_at_arc(path, &cum, s0)];
    for (i, &c) in cum.iter().enumerate() {
        if c > s0 && c < s1 {
            out.push(path[i]);
        }
    }
    out.push(point_at_arc(path, &cum, s1));
    out.dedup_by(|a, b| a == b);
    out
}

/// Resamples the expert path into 8 robot-frame waypoints, 0.4 m apart in
/// arc length, measured from the point on the path closest to the robot.
/// z is always 0 (ground plane).
pub fn waypoints_from_path(path: &[[f64; 2]], pose: Pose2D) -> Waypoints {
    assert!(!path.is_empty(), "waypoints_from_path needs a non-empty path");
    let cum = cumlen(path);
    let s0 = closest_arc(path, &cum, pose.xy());
    let mut out = [[0.0f64; 3]; N_WAYPOINTS];
    for (k, wp) in out.iter_mut().enumerate() {
        let s = s0 + WAYPOINT_SPACING * (k + 1) as f64;
        let world = point_at_arc(path, &cum, s);
        let local = pose.world_to_local(world);
        *wp = [local[0], local[1], 0.0];
    }
    out
}
