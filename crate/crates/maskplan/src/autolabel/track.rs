//! Point trackers: the geometric oracle and the patch-correlation tracker.
//!
//! Both fill a breadcrumb's per-frame positions from its birth frame back to
//! frame 0. The oracle projects the known world point through each pose and
//! checks occlusion. The correlation tracker sees only pixels and camera
//! intrinsics: it matches a 7x7 luma patch by normalized cross-correlation
//! over a +-6 px window anchored at the last visible position in
//! motion-stabilized coordinates, re-anchoring whenever a match succeeds.
//! A bit-exact re-find of the template at the anchor pixel (a static scene)
//! short-circuits the motion hypothesis.

use super::breadcrumbs::BreadcrumbTrack;
use crate::expertdata::Episode;
use crate::simworld::{CameraModel, Frame, Pose2D, Projected, World};

/// NCC acceptance threshold; below it the point is declared NotVisible.
pub const NCC_THRESHOLD: f64 = 0.6;
/// Search half-extent in pixels around each window center.
pub const SEARCH_RADIUS: i64 = 6;
/// Patch half-extent: 7x7 patches.
const PATCH_R: i64 = 3;
/// Nominal forward motion per frame used by the prediction warp, meters.
const NOMINAL_STEP_M: f64 = 0.25;

/// Oracle tracking: project the source point through every pose up to the
/// birth frame; NotVisible when out of frustum or occluded by a cylinder.
pub fn oracle_track(
    world: &World,
    camera: &CameraModel,
    poses: &[Pose2D],
    track: &BreadcrumbTrack,
) -> Vec<Projected> {
    (0..=track.birth)
        .map(|j| match camera.project_ground(poses[j], track.source_point) {
            Projected::NotVisible => Projected::NotVisible,
            vis => {
                let origin = [poses[j].x, poses[j].y, camera.cam_height];
                if world.segment_occluded(origin, track.source_point) {
                    Projected::NotVisible
                } else {
                    vis
                }
            }
        })
        .collect()
}

/// 7x7 luma patch centered at integer pixel (cu, cv), border-clamped.
fn patch(frame: &Frame, cu: i64, cv: i64) -> [f64; 49] {
    let mut out = [0.0; 49];
    let mut i = 0;
    for dv in -PATCH_R..=PATCH_R {
        for du in -PATCH_R..=PATCH_R {
            let u = (cu + du).clamp(0, frame.width as i64 - 1) as usize;
            let v = (cv + dv).clamp(0, frame.height as i64 - 1) as usize;
            out[i] = frame.luma(u, v);
            i += 1;
        }
    }
    out
}

/// Patches whose contrast sits at or below one 8-bit quantization level are
/// noise, not texture; normalizing them amplifies that noise into spurious
/// near-1 correlations. Threshold on the sum of squared deviations of a
/// 49-pixel patch in 0..1 luma.
const MIN_PATCH_VAR: f64 = 49.0 / (255.0 * 255.0);

/// Zero-mean normalized cross-correlation; 0 when either patch has no
/// usable variance (the degenerate-texture rule).
fn ncc(a: &[f64; 49], b: &[f64; 49]) -> f64 {
    let ma = a.iter().sum::<f64>() / 49.0;
    let mb = b.iter().sum::<f64>() / 49.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..49 {
        let da = a[i] - ma;
        let db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va < MIN_PATCH_VAR || vb < MIN_PATCH_VAR {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Nominal-motion ground warp, `k` frame-steps backward in time: the point
/// appears k x 0.25 m further away. Pixels above the horizon are left in
/// place.
fn warp_back_k(camera: &CameraModel, u: f64, v: f64, k: usize) -> (f64, f64) {
    let d = match camera.ground_distance_for_row(v) {
        Some(d) => d,
        None => return (u, v),
    };
    let d2 = d + NOMINAL_STEP_M * k as f64;
    let v2 = camera.row_for_ground_distance(d2);
    let u2 = camera.cx + (u - camera.cx) * camera.ground_depth(d) / camera.ground_depth(d2);
    (u2, v2)
}

/// Bilinear luma sample, border-clamped.
fn bilinear_luma(frame: &Frame, u: f64, v: f64) -> f64 {
    let u = u.clamp(0.0, frame.width as f64 - 1.0);
    let v = v.clamp(0.0, frame.height as f64 - 1.0);
    let u0 = u.floor() as usize;
    let v0 = v.floor() as usize;
    let u1 = (u0 + 1).min(frame.width - 1);
    let v1 = (v0 + 1).min(frame.height - 1);
    let fu = u - u0 as f64;
    let fv = v - v0 as f64;
    let top = frame.luma(u0, v0) * (1.0 - fu) + frame.luma(u1, v0) * fu;
    let bot = frame.luma(u0, v1) * (1.0 - fu) + frame.luma(u1, v1) * fu;
    top * (1.0 - fv) + bot * fv
}

/// Half-extent of the stabilized resampling neighborhood: search window plus
/// patch apron.
const STAB_R: i64 = SEARCH_RADIUS + PATCH_R;

/// The motion hypothesis stops searching after this many consecutive lost
/// frames: each lost frame extrapolates another 0.25 m of assumed travel,
/// and past one meter the +-6 px window around the prediction no longer
/// covers realistic speed error. The static hypothesis does not decay, so
/// it keeps running at any age.
const MAX_LOST_STEPS: usize = 4;

/// Where the best match came from: the bit-exact static re-find at the
/// center, or an offset in the motion-stabilized window.
#[derive(Clone, Copy)]
enum BestLoc {
    Static,
    Stab(i64, i64),
}

/// Correlation tracking: pixels plus camera intrinsics only, poses never
/// consulted. Returns positions for frames 0..=birth.
///
/// The 7x7 template is centered on the nearest pixel whose patch fits fully
/// inside the image; the tracked point rides at a fixed fractional offset
/// from that center (seeds sit on the bottom row, where a point-centered
/// patch would be half border padding). Two +-6 px candidate windows are
/// scored against the template:
/// * raw pixels around the last visible center (a static scene re-finds
///   the exact pixel there, and exact matches win ties);
/// * the same offsets in a motion-stabilized resampling of the earlier
///   frame, built by warping each pixel through the nominal ground flow
///   (0.25 m per elapsed frame). The warp removes the perspective scale
///   change, so a cruising robot's true match correlates near 1 even
///   though it lies far outside a raw +-6 px window.
pub fn corr_track(
    frames: &[Frame],
    camera: &CameraModel,
    track: &BreadcrumbTrack,
) -> Vec<Projected> {
    let (su, sv) = track
        .seed_pixel()
        .visible()
        .expect("corr_track pre: birth pixel visible");
    let w = frames[0].width as i64;
    let h = frames[0].height as i64;
    let wf = frames[0].width as f64;
    let hf = frames[0].height as f64;
    let mut positions = vec![Projected::NotVisible; track.birth + 1];
    positions[track.birth] = Projected::Visible { u: su, v: sv };

    let clamp_center = |p: (f64, f64)| -> (i64, i64) {
        (
            (p.0.round() as i64).clamp(PATCH_R, w - 1 - PATCH_R),
            (p.1.round() as i64).clamp(PATCH_R, h - 1 - PATCH_R),
        )
    };

    // Point and patch center live in the last visible frame's coordinates.
    let mut point = (su, sv);
    let mut center = clamp_center(point);
    let mut offset = (point.0 - center.0 as f64, point.1 - center.1 as f64);
    let mut template = patch(&frames[track.birth], center.0, center.1);
    let mut lost = 0usize;

    for j in (0..track.birth).rev() {
        let k = lost + 1; // nominal steps from the last visible frame back to j

        // Static hypothesis: a scene that did not move re-finds the template
        // bit-for-bit at the same pixel, because rendering is deterministic.
        // The texture requirement still applies: uniform content re-finds
        // trivially and localizes nothing, so it does not count.
        let at_center = patch(&frames[j], center.0, center.1);
        let is_static = at_center == template && ncc(&template, &at_center) >= NCC_THRESHOLD;

        // Motion hypothesis: resample frame j through the k-step ground warp
        // around the center, then maximize NCC over +-6 px offsets in warp
        // coordinates.
        let mut stab_ncc = f64::NEG_INFINITY;
        let mut stab_at = (0i64, 0i64);
        if !is_static && k <= MAX_LOST_STEPS {
            let n = (2 * STAB_R + 1) as usize;
            let mut stab = vec![0.0f64; n * n];
            for dy in -STAB_R..=STAB_R {
                for dx in -STAB_R..=STAB_R {
                    let (wu, wv) = warp_back_k(
                        camera,
                        (center.0 + dx) as f64,
                        (center.1 + dy) as f64,
                        k,
                    );
                    stab[((dy + STAB_R) * (2 * STAB_R + 1) + (dx + STAB_R)) as usize] =
                        bilinear_luma(&frames[j], wu, wv);
                }
            }
            for dv in -SEARCH_RADIUS..=SEARCH_RADIUS {
                for du in -SEARCH_RADIUS..=SEARCH_RADIUS {
                    // The warped point must land inside the earlier frame.
                    let (pu, pv) = warp_back_k(
                        camera,
                        (center.0 + du) as f64 + offset.0,
                        (center.1 + dv) as f64 + offset.1,
                        k,
                    );
                    if pu < 0.0 || pv < 0.0 || pu >= wf || pv >= hf {
                        continue;
                    }
                    let mut cand = [0.0f64; 49];
                    let mut i = 0;
                    for pv in -PATCH_R..=PATCH_R {
                        for pu in -PATCH_R..=PATCH_R {
                            cand[i] = stab[((dv + pv + STAB_R) * (2 * STAB_R + 1)
                                + (du + pu + STAB_R)) as usize];
                            i += 1;
                        }
                    }
                    let score = ncc(&template, &cand);
                    if score > stab_ncc {
                        stab_ncc = score;
                        stab_at = (du, dv);
                    }
                }
            }
        }

        let best = if is_static {
            Some(BestLoc::Static)
        } else if stab_ncc >= NCC_THRESHOLD {
            Some(BestLoc::Stab(stab_at.0, stab_at.1))
        } else {
            None
        };

        if let Some(loc) = best {
            let p = match loc {
                BestLoc::Static => point,
                BestLoc::Stab(du, dv) => warp_back_k(
                    camera,
                    (center.0 + du) as f64 + offset.0,
                    (center.1 + dv) as f64 + offset.1,
                    k,
                ),
            };
            positions[j] = Projected::Visible { u: p.0, v: p.1 };
            point = p;
            center = clamp_center(point);
            offset = (point.0 - center.0 as f64, point.1 - center.1 as f64);
            template = patch(&frames[j], center.0, center.1);
            lost = 0;
        } else {
            lost += 1;
        }
    }
    positions
}

/// Tracker selection for `label_episode` and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerKind {
    Oracle,
    Correlation,
}

impl TrackerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrackerKind::Oracle => "oracle",
            TrackerKind::Correlation => "correlation",
        }
    }
}

impl std::str::FromStr for TrackerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(TrackerKind::Oracle),
            "corr" | "correlation" => Ok(TrackerKind::Correlation),
            other => Err(format!("unknown tracker {:?} (expected oracle|corr)", other)),
        }
    }
}

/// Object-safe tracker interface so the labeler and tests can swap trackers.
pub trait PointTracker {
    fn name(&self) -> &'static str;
    fn track(&self, ep: &Episode, t: &BreadcrumbTrack) -> Vec<Projected>;
}

pub struct OracleTracker;

impl PointTracker for OracleTracker {
    fn name(&self) -> &'static str {
        "oracle"
    }
    fn track(&self, ep: &Episode, t: &BreadcrumbTrack) -> Vec<Projected> {
        oracle_track(&ep.world, &ep.camera, &ep.poses, t)
    }
}

pub struct CorrelationTracker;

impl PointTracker for CorrelationTracker {
    fn name(&self) -> &'static str {
        "correlation"
    }
    fn track(&self, ep: &Episode, t: &BreadcrumbTrack) -> Vec<Projected> {
        corr_track(&ep.frames, &ep.camera, t)
    }
}

/// Seeds breadcrumbs and runs the chosen tracker over each.
pub fn track_episode(ep: &Episode, tracker: &dyn PointTracker) -> Vec<BreadcrumbTrack> {
    let mut tracks = super::breadcrumbs::seed_breadcrumbs(ep);
    for t in &mut tracks {
        t.positions = tracker.track(ep, t);
    }
    tracks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expertdata::episode_from_polyline;
    use crate::simworld::{
        gen_world, CameraModel, EntityClass, Obstacle, World, WorldGenConfig,
    };

    fn open_world(seed: u64) -> World {
        let mut cfg = WorldGenConfig::default();
        cfg.n_obstacles = [0, 0];
        cfg.n_objects = [1, 1];
        gen_world(seed, &cfg)
    }

    fn straight_episode(seed: u64) -> Episode {
        let world = open_world(seed);
        episode_from_polyline(
            world,
            CameraModel::default(),
            &[[2.0, 6.0], [9.0, 6.0]],
            "straight",
        )
    }

    #[test]
    fn oracle_rows_increase_monotonically_toward_the_bottom() {
        let ep = straight_episode(5);
        let tracks = track_episode(&ep, &OracleTracker);
        // Take a track born late so it spans many frames.
        let t = tracks
            .iter()
            .filter(|t| t.lateral == 0.0)
            .max_by_key(|t| t.birth)
            .unwrap();
        let mut last_v = -1.0;
        let mut seen = 0;
        for j in 0..=t.birth {
            if let Some((_, v)) = t.positions[j].visible() {
                assert!(
                    v > last_v,
                    "row must increase in forward time: {} then {}",
                    last_v,
                    v
                );
                last_v = v;
                seen += 1;
            }
        }
        assert!(seen >= 5, "track visible on only {} frames", seen);
    }

    #[test]
    fn oracle_marks_points_behind_an_obstacle_not_visible() {
        // Camera at the origin looks +x; a trashcan stands at (2.2, 6.0)
        // between the camera and a ground point at (4.0, 6.0).
        let mut world = open_world(1);
        world.obstacles.push(Obstacle {
            center: [2.2, 6.0],
            radius: 0.3,
            class: EntityClass::Trashcan,
            color: crate::simworld::ColorName::Blue,
            height: 0.68,
        });
        let ep = episode_from_polyline(
            world,
            CameraModel::default(),
            &[[0.5, 6.0], [1.2, 6.0]],
            "occluded",
        );
        let mut t = super::super::breadcrumbs::seed_breadcrumbs(&ep)
            .into_iter()
            .next()
            .unwrap();
        t.source_point = [4.0, 6.0];
        let pos = oracle_track(&ep.world, &ep.camera, &ep.poses, &t);
        assert_eq!(pos[0], Projected::NotVisible);
    }

    #[test]
    fn corr_track_is_static_on_a_static_scene() {
        let ep = straight_episode(2);
        // Stationary: every frame identical to frame 0.
        let frames: Vec<Frame> = (0..6).map(|_| ep.frames[0].clone()).collect();
        let mut t = super::super::breadcrumbs::seed_breadcrumbs(&ep)
            .into_iter()
            .next()
            .unwrap();
        t.birth = 5;
        let seed = t.positions[t.positions.len() - 1];
        t.positions = vec![Projected::NotVisible; 6];
        t.positions[5] = seed;
        let (su, sv) = seed.visible().unwrap();
        let pos = corr_track(&frames, &ep.camera, &t);
        for j in 0..5 {
            let (u, v) = pos[j].visible().expect("static patch must track");
            assert!(
                (u - su).abs() <= 1.0 && (v - sv).abs() <= 1.0,
                "frame {}: drifted to ({}, {}) from ({}, {})",
                j,
                u,
                v,
                su,
                sv
            );
        }
    }

    #[test]
    fn corr_track_gives_up_on_textureless_frames() {
        let ep = straight_episode(3);
        let flat = Frame {
            width: 64,
            height: 64,
            rgb: vec![128; 64 * 64 * 3],
        };
        let frames: Vec<Frame> = (0..4).map(|_| flat.clone()).collect();
        let mut t = super::super::breadcrumbs::seed_breadcrumbs(&ep)
            .into_iter()
            .next()
            .unwrap();
        t.birth = 3;
        t.positions = vec![Projected::NotVisible; 4];
        t.positions[3] = Projected::Visible { u: 32.0, v: 60.0 };
        let pos = corr_track(&frames, &ep.camera, &t);
        assert_eq!(pos[2], Projected::NotVisible, "zero variance must fail NCC");
        assert_eq!(pos[1], Projected::NotVisible);
    }

    #[test]
    fn corr_track_stays_close_to_the_oracle_on_a_clean_straight_drive() {
        let ep = straight_episode(7);
        let oracle = track_episode(&ep, &OracleTracker);
        let corr = track_episode(&ep, &CorrelationTracker);
        let mut err_sum = 0.0;
        let mut n = 0usize;
        for (o, c) in oracle.iter().zip(&corr) {
            for j in 0..=o.birth {
                if let (Some((ou, ov)), Some((cu, cv))) =
                    (o.positions[j].visible(), c.positions[j].visible())
                {
                    err_sum += ((ou - cu).powi(2) + (ov - cv).powi(2)).sqrt();
                    n += 1;
                }
            }
        }
        assert!(n > 50, "too few co-visible samples: {}", n);
        let mean = err_sum / n as f64;
        assert!(mean <= 2.0, "mean corr-vs-oracle error {:.2} px", mean);
    }

    #[test]
    fn corr_track_never_reads_poses() {
        // The correlation path runs with poses withheld: only frames and
        // intrinsics go in. Zeroing the poses must not change the output.
        let ep = straight_episode(9);
        let tracks = super::super::breadcrumbs::seed_breadcrumbs(&ep);
        let t = &tracks[tracks.len() - 1];
        let a = corr_track(&ep.frames, &ep.camera, t);
        let mut stripped = ep.clone();
        for p in stripped.poses.iter_mut() {
            *p = Pose2D::new(0.0, 0.0, 0.0);
        }
        let b = corr_track(&stripped.frames, &stripped.camera, t);
        assert_eq!(a, b);
    }

    #[test]
    fn warp_back_moves_points_up_the_image() {
        let cam = CameraModel::default();
        let (u, v) = warp_back_k(&cam, 40.0, 63.0, 1);
        assert!(v < 63.0, "backward warp must move rows up, got {}", v);
        assert!(u < 40.0 && u > 32.0, "off-center column shrinks toward cx: {}", u);
        // Above the horizon the warp is the identity.
        let (u2, v2) = warp_back_k(&cam, 20.0, 5.0, 1);
        assert_eq!((u2, v2), (20.0, 5.0));
        // Composition telescopes: two single steps equal one double step.
        let (ua, va) = warp_back_k(&cam, u, v, 1);
        let (ub, vb) = warp_back_k(&cam, 40.0, 63.0, 2);
        assert!((ua - ub).abs() < 1e-9 && (va - vb).abs() < 1e-9);
    }
}
