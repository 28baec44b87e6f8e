//! Binary path-mask fitting from tracked breadcrumbs.
//!
//! Visible center-line breadcrumbs, ordered by birth, are connected into a
//! stroked polyline. The stroke's per-row half-width follows the projected
//! footprint width, which for a pitched pinhole over a ground plane is
//! exactly linear in the image row: full width at the bottom row, zero at
//! the horizon. Segments whose either endpoint is NotVisible are omitted,
//! so occlusions leave real gaps in the mask.

use super::breadcrumbs::BreadcrumbTrack;
use super::PathMask;
use crate::simworld::CameraModel;

/// Raised when no center-line breadcrumb is visible in a frame; the caller
/// stores an all-zero mask and flags the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("no visible breadcrumb in this frame")]
pub struct EmptyMask;

/// The footprint width profile in pixels, linear in the image row.
#[derive(Debug, Clone, Copy)]
pub struct FootprintProfile {
    /// Row of the bottom line of pixels.
    pub bottom_row: f64,
    /// Horizon row; the profile hits zero here.
    pub horizon_row: f64,
    /// Footprint half-width in pixels at `bottom_row`.
    pub halfwidth_bottom: f64,
}

impl FootprintProfile {
    pub fn from_camera(cam: &CameraModel) -> Self {
        let bottom_row = cam.height as f64 - 0.5;
        let d0 = cam
            .ground_distance_for_row(bottom_row)
            .expect("bottom row must see ground");
        FootprintProfile {
            bottom_row,
            horizon_row: cam.horizon_row(),
            halfwidth_bottom: cam.footprint_halfwidth_px(d0),
        }
    }

    /// Footprint half-width in pixels at image row `v` (0 above the horizon).
    pub fn halfwidth_at(&self, v: f64) -> f64 {
        let t = (v - self.horizon_row) / (self.bottom_row - self.horizon_row);
        (self.halfwidth_bottom * t).max(0.0)
    }
}

/// Stamps a horizontal run of mask pixels centered at (u, v) with the
/// profile's half-width for that row.
fn stamp_run(mask: &mut PathMask, profile: &FootprintProfile, u: f64, v: f64) {
    let row = v.round();
    if row < 0.0 || row >= mask.height as f64 {
        return;
    }
    let hw = profile.halfwidth_at(v);
    if hw <= 0.0 {
        return;
    }
    let lo = ((u - hw).ceil().max(0.0)) as usize;
    let hi = ((u + hw).floor().min(mask.width as f64 - 1.0)) as usize;
    let row = row as usize;
    for col in lo..=hi {
        mask.set(col, row, 1.0);
    }
}

/// Strokes the segment between two visible breadcrumb pixels.
fn stroke_segment(
    mask: &mut PathMask,
    profile: &FootprintProfile,
    a: (f64, f64),
    b: (f64, f64),
) {
    let du = b.0 - a.0;
    let dv = b.1 - a.1;
    let steps = (du.abs().max(dv.abs()).ceil() as usize).max(1) * 3;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        stamp_run(mask, profile, a.0 + t * du, a.1 + t * dv);
    }
}

/// Fits the binary path mask for one frame from tracked breadcrumbs.
/// Center-line tracks are ordered by birth; each birth-consecutive pair with
/// both endpoints visible contributes a stroked segment. A visible crumb
/// with no drawable neighbor stamps its own row so it is not lost.
pub fn fit_mask(
    tracks: &[BreadcrumbTrack],
    frame_index: usize,
    profile: &FootprintProfile,
    width: usize,
    height: usize,
) -> Result<PathMask, EmptyMask> {
    // Center-line crumbs that exist at this frame, by birth (near to far).
    let mut centers: Vec<(usize, Option<(f64, f64)>)> = tracks
        .iter()
        .filter(|t| t.lateral == 0.0 && t.birth >= frame_index)
        .map(|t| (t.birth, t.positions[frame_index].visible()))
        .collect();
    centers.sort_by_key(|(birth, _)| *birth);
    if !centers.iter().any(|(_, p)| p.is_some()) {
        return Err(EmptyMask);
    }

    let mut mask = PathMask::new(width, height);
    let mut drawn = vec![false; centers.len()];
    for i in 0..centers.len().saturating_sub(1) {
        let (ba, pa) = centers[i];
        let (bb, pb) = centers[i + 1];
        if bb != ba + 1 {
            continue;
        }
        if let (Some(a), Some(b)) = (pa, pb) {
            stroke_segment(&mut mask, profile, a, b);
            drawn[i] = true;
            drawn[i + 1] = true;
        }
    }
    for (i, (_, p)) in centers.iter().enumerate() {
        if let Some((u, v)) = p {
            if !drawn[i] {
                stamp_run(&mut mask, profile, *u, *v);
            }
        }
    }
    Ok(mask)
}

/// Counts 4-connected components of mask pixels above 0.5. Used by tests
/// and the occlusion acceptance check.
pub fn mask_components(mask: &PathMask) -> usize {
    let w = mask.width;
    let h = mask.height;
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        if seen[start] || mask.data[start] <= 0.5 {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut push = |x2: usize, y2: usize, stack: &mut Vec<usize>| {
                let j = y2 * w + x2;
                if !seen[j] && mask.data[j] > 0.5 {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(x - 1, y, &mut stack);
            }
            if x + 1 < w {
                push(x + 1, y, &mut stack);
            }
            if y > 0 {
                push(x, y - 1, &mut stack);
            }
            if y + 1 < h {
                push(x, y + 1, &mut stack);
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autolabel::track::{track_episode, OracleTracker};
    use crate::expertdata::episode_from_polyline;
    use crate::simworld::{gen_world, CameraModel, Projected, WorldGenConfig};

    fn straight_fixture() -> (crate::expertdata::Episode, Vec<BreadcrumbTrack>) {
        let mut cfg = WorldGenConfig::default();
        cfg.n_obstacles = [0, 0];
        let world = gen_world(4, &cfg);
        let ep = episode_from_polyline(
            world,
            CameraModel::default(),
            &[[2.0, 6.0], [9.5, 6.0]],
            "fit-straight",
        );
        let tracks = track_episode(&ep, &OracleTracker);
        (ep, tracks)
    }

    #[test]
    fn straight_drive_mask_is_one_wedge_with_monotone_width() {
        let (ep, tracks) = straight_fixture();
        let profile = FootprintProfile::from_camera(&ep.camera);
        let mask = fit_mask(&tracks, 0, &profile, 64, 64).unwrap();
        assert_eq!(mask_components(&mask), 1, "straight path must fit one wedge");
        // Row-wise width is non-increasing upward (toward smaller v).
        let mut widths = Vec::new();
        for v in 0..64 {
            let w = (0..64).filter(|&u| mask.get(u, v) > 0.5).count();
            if w > 0 {
                widths.push((v, w));
            }
        }
        assert!(widths.len() > 20, "wedge spans {} rows", widths.len());
        for pair in widths.windows(2) {
            assert!(
                pair[0].1 <= pair[1].1 + 1,
                "width must not grow upward: rows {:?}",
                pair
            );
        }
        // Wider at the bottom than at the top.
        assert!(widths.last().unwrap().1 > widths.first().unwrap().1);
    }

    #[test]
    fn masks_are_binary_and_below_the_horizon() {
        let (ep, tracks) = straight_fixture();
        let profile = FootprintProfile::from_camera(&ep.camera);
        for j in 0..ep.poses.len().saturating_sub(1) {
            let mask = fit_mask(&tracks, j, &profile, 64, 64).unwrap();
            for v in 0..64 {
                for u in 0..64 {
                    let x = mask.get(u, v);
                    assert!(x == 0.0 || x == 1.0, "mask must be binary");
                    if x > 0.5 {
                        assert!(
                            (v as f64) >= ep.camera.horizon_row(),
                            "mask pixel above horizon at row {}",
                            v
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn occlusion_gap_splits_the_mask_into_components() {
        let (_, mut tracks) = straight_fixture();
        // Artificially occlude a central band of center-line breadcrumbs at
        // frame 0: births 6..=9 marked NotVisible.
        let mut killed = 0;
        for t in tracks.iter_mut() {
            if t.lateral == 0.0 && (6..=9).contains(&t.birth) {
                t.positions[0] = Projected::NotVisible;
                killed += 1;
            }
        }
        assert!(killed >= 3, "fixture too short to stage an occlusion");
        let profile = FootprintProfile::from_camera(&CameraModel::default());
        let mask = fit_mask(&tracks, 0, &profile, 64, 64).unwrap();
        assert!(
            mask_components(&mask) >= 2,
            "omitted segments must leave a gap"
        );
    }

    #[test]
    fn no_visible_crumbs_is_an_empty_mask_error() {
        let (_, mut tracks) = straight_fixture();
        for t in tracks.iter_mut() {
            t.positions[0] = Projected::NotVisible;
        }
        let profile = FootprintProfile::from_camera(&CameraModel::default());
        assert_eq!(fit_mask(&tracks, 0, &profile, 64, 64), Err(EmptyMask));
    }

    #[test]
    fn lone_visible_crumb_stamps_a_bar() {
        let (_, mut tracks) = straight_fixture();
        // Keep exactly one center crumb visible at frame 0.
        let mut kept = None;
        for t in tracks.iter_mut() {
            if t.lateral == 0.0 {
                if kept.is_none() && t.birth == 3 {
                    kept = Some(t.positions[0]);
                } else {
                    t.positions[0] = Projected::NotVisible;
                }
            } else {
                t.positions[0] = Projected::NotVisible;
            }
        }
        let profile = FootprintProfile::from_camera(&CameraModel::default());
        let mask = fit_mask(&tracks, 0, &profile, 64, 64).unwrap();
        assert!(!mask.is_empty(), "isolated crumb must still mark the frame");
        assert_eq!(mask_components(&mask), 1);
    }

    #[test]
    fn profile_is_linear_and_zero_at_horizon() {
        let cam = CameraModel::default();
        let p = FootprintProfile::from_camera(&cam);
        assert!(p.halfwidth_at(p.horizon_row) == 0.0);
        assert!(p.halfwidth_at(p.horizon_row - 5.0) == 0.0);
        // Exactly the projected footprint half-width at sample rows.
        for v in [20.0, 40.0, 63.5] {
            let d = cam.ground_distance_for_row(v).unwrap();
            let expect = cam.footprint_halfwidth_px(d);
            assert!(
                (p.halfwidth_at(v) - expect).abs() < 1e-9,
                "row {}: {} vs {}",
                v,
                p.halfwidth_at(v),
                expect
            );
        }
    }
}
