//! Breadcrumb seeding for reverse-video labeling.
//!
//! Playing an episode backward, every 0.25 s frame (except the forward-final
//! one) seeds three tracks at the nearest ground the camera sees in front of
//! the robot footprint: the bottom image row, at lateral offsets 0 and
//! ±0.25 m. Each track stores its world-frame source point and, at birth,
//! its seed pixel; trackers fill in the earlier frames.

use crate::expertdata::Episode;
use crate::simworld::{Projected, ROBOT_RADIUS};

/// One breadcrumb: a ground point the robot drove over, tracked backward
/// from its birth frame to frame 0.
#[derive(Debug, Clone)]
pub struct BreadcrumbTrack {
    /// Birth index in reversed play order; forward frame = N - 1 - birth_rev.
    pub birth_rev: usize,
    /// Forward frame index of the birth.
    pub birth: usize,
    /// Lateral offset in the birth pose's frame: 0 center, ±robot radius.
    pub lateral: f64,
    /// World-frame ground point.
    pub source_point: [f64; 2],
    /// Pixel position per forward frame 0..=birth; filled by a tracker.
    /// At construction only the birth entry is set (the seed pixel).
    pub positions: Vec<Projected>,
}

impl BreadcrumbTrack {
    /// Seed pixel at the birth frame.
    pub fn seed_pixel(&self) -> Projected {
        self.positions[self.birth]
    }
}

/// Alias kept for readability in signatures.
pub type Track = BreadcrumbTrack;

/// Alias used by seeding: a breadcrumb before tracking.
pub type Breadcrumb = BreadcrumbTrack;

/// Seeds 3·(N−1) tracks over the episode's frames: reversed steps
/// 1..=N−1 (forward frames N−2..=0), three per step at lateral
/// {0, +0.25, −0.25} m, at the ground distance of the bottom image row.
pub fn seed_breadcrumbs(ep: &Episode) -> Vec<BreadcrumbTrack> {
    let n = ep.poses.len();
    assert!(n >= 2, "breadcrumb seeding needs at least 2 frames");
    let cam = &ep.camera;
    let bottom_row = cam.height as f64 - 0.5;
    let d0 = cam
        .ground_distance_for_row(bottom_row)
        .expect("bottom image row sees the ground");
    let mut tracks = Vec::with_capacity(3 * (n - 1));
    for birth in 0..n - 1 {
        let pose = ep.poses[birth];
        for lateral in [0.0, ROBOT_RADIUS, -ROBOT_RADIUS] {
            let source_point = pose.local_to_world([d0, lateral]);
            let mut positions = vec![Projected::NotVisible; birth + 1];
            positions[birth] = cam.project_ground(pose, source_point);
            debug_assert!(
                positions[birth].visible().is_some(),
                "seed pixel must be visible at birth"
            );
            tracks.push(BreadcrumbTrack {
                birth_rev: n - 1 - birth,
                birth,
                lateral,
                source_point,
                positions,
            });
        }
    }
    tracks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expertdata::episode::gen_episode_by_index;
    use crate::expertdata::DataGenConfig;

    fn sample_episode() -> Episode {
        let mut cfg = DataGenConfig::default();
        cfg.episodes = 4;
        cfg.labeled_fraction = 0.0;
        gen_episode_by_index(&cfg, 0).unwrap()
    }

    #[test]
    fn track_count_is_three_per_frame_except_the_last() {
        let ep = sample_episode();
        let tracks = seed_breadcrumbs(&ep);
        assert_eq!(tracks.len(), 3 * (ep.poses.len() - 1));
    }

    #[test]
    fn seed_pixels_sit_in_the_bottom_quarter_of_the_image() {
        let ep = sample_episode();
        for t in seed_breadcrumbs(&ep) {
            let (u, v) = t.seed_pixel().visible().expect("seed visible at birth");
            assert!(
                v >= ep.camera.height as f64 * 0.75,
                "seed pixel row {} is not in the bottom 25%",
                v
            );
            assert!(u >= 0.0 && u < ep.camera.width as f64);
        }
    }

    #[test]
    fn reversed_index_bookkeeping_is_consistent() {
        let ep = sample_episode();
        let n = ep.poses.len();
        for t in seed_breadcrumbs(&ep) {
            assert_eq!(t.birth, n - 1 - t.birth_rev);
            assert_eq!(t.positions.len(), t.birth + 1);
            assert!(t.birth_rev >= 1, "final forward frame must not seed");
        }
    }

    #[test]
    fn stationary_episode_shares_three_source_points() {
        // Hand-build a stationary episode: identical poses throughout.
        let mut ep = sample_episode();
        let p0 = ep.poses[0];
        for p in ep.poses.iter_mut() {
            *p = p0;
        }
        let tracks = seed_breadcrumbs(&ep);
        let mut distinct: Vec<[f64; 2]> = Vec::new();
        for t in &tracks {
            if !distinct.iter().any(|q| *q == t.source_point) {
                distinct.push(t.source_point);
            }
        }
        assert!(distinct.len() <= 3, "{} distinct source points", distinct.len());
    }

    #[test]
    fn source_points_lie_just_ahead_of_the_birth_pose() {
        let ep = sample_episode();
        for t in seed_breadcrumbs(&ep) {
            let pose = ep.poses[t.birth];
            let local = pose.world_to_local(t.source_point);
            assert!((local[0] - 0.528835586629937).abs() < 1e-6);
            assert!(local[1].abs() <= ROBOT_RADIUS + 1e-9);
        }
    }
}
