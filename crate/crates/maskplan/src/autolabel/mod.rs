//! Automatic path-mask labeling by reverse-video breadcrumb tracking.
//!
//! Given a recorded episode, the labeler seeds breadcrumbs at the bottom of
//! the image on late frames, tracks them backward through time (either with
//! the geometric oracle or a correlation tracker), and rasterizes the
//! surviving track points into a soft path mask per frame.

mod breadcrumbs;
mod fit;
mod track;

pub use breadcrumbs::{seed_breadcrumbs, Breadcrumb, BreadcrumbTrack, Track};
pub use fit::{fit_mask, mask_components, EmptyMask, FootprintProfile};
pub use track::{
    track_episode, CorrelationTracker, OracleTracker, PointTracker, TrackerKind,
};

use crate::expertdata::{Episode, LabelMeta};
use crate::simworld::Projected;
use serde::{Deserialize, Serialize};

/// Runs the full labeling pipeline on an episode in place: seeds breadcrumbs,
/// tracks them backward through the recorded frames, and fits one mask per
/// frame. Frames with no visible breadcrumb (always including the final
/// frame) get an all-zero mask and an `empty_mask` flag in the label
/// metadata. Returns the tracks for inspection.
pub fn label_episode(ep: &mut Episode, tracker: TrackerKind) -> Vec<BreadcrumbTrack> {
    let tracks = match tracker {
        TrackerKind::Oracle => track_episode(ep, &OracleTracker),
        TrackerKind::Correlation => track_episode(ep, &CorrelationTracker),
    };
    let profile = FootprintProfile::from_camera(&ep.camera);
    let n = ep.poses.len();
    let (w, h) = (ep.camera.width as usize, ep.camera.height as usize);
    let mut masks = Vec::with_capacity(n);
    let mut empty_mask = Vec::with_capacity(n);
    for f in 0..n {
        match fit_mask(&tracks, f, &profile, w, h) {
            Ok(m) => {
                masks.push(m);
                empty_mask.push(false);
            }
            Err(EmptyMask) => {
                masks.push(PathMask::new(w, h));
                empty_mask.push(true);
            }
        }
    }
    let visible_points = (0..n)
        .map(|f| {
            tracks
                .iter()
                .filter(|t| t.birth >= f && matches!(t.positions[f], Projected::Visible { .. }))
                .count()
        })
        .collect();
    ep.masks = Some(masks);
    ep.labels = Some(LabelMeta {
        tracker: tracker.name().to_string(),
        empty_mask,
        visible_points,
    });
    tracks
}

/// A soft path mask over the camera image; values in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMask {
    pub width: usize,
    pub height: usize,
    /// Row-major, `width * height` values in [0, 1].
    pub data: Vec<f32>,
}

impl PathMask {
    pub fn new(width: usize, height: usize) -> Self {
        PathMask {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, val: f32) {
        self.data[v * self.width + u] = val;
    }

    /// Fraction of pixels above 0.5.
    pub fn coverage(&self) -> f64 {
        let on = self.data.iter().filter(|&&v| v > 0.5).count();
        on as f64 / self.data.len() as f64
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Quantizes to bytes with round-half-up; the PGM representation.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| ((v.clamp(0.0, 1.0) * 255.0) + 0.5).floor() as u8)
            .collect()
    }

    /// Inverse of [`to_bytes`] up to quantization: values are byte / 255.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Self {
        assert_eq!(bytes.len(), width * height);
        PathMask {
            width,
            height,
            data: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }

    /// Intersection-over-union against another mask at a 0.5 threshold.
    pub fn iou(&self, other: &PathMask) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.data.iter().zip(&other.data) {
            let pa = *a > 0.5;
            let pb = *b > 0.5;
            if pa && pb {
                inter += 1;
            }
            if pa || pb {
                union += 1;
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}
