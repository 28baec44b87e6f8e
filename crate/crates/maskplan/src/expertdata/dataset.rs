//! Dataset IO: a directory tree of episodes under a JSON manifest.
//!
//! Layout:
//!
//! ```text
//! root/
//!   manifest.json          dataset id, seed, vocabulary, episode index
//!   <episode-id>/
//!     meta.json            identity, task, instruction, camera, world, labels
//!     poses.csv            t,x,y,theta           (one row per frame)
//!     actions.csv          t,x1,y1,z1,...,z8     (8 waypoints per frame)
//!     frames/%06d.ppm      rendered egocentric frames
//!     masks/%06d.pgm       path masks, 255 = path (after auto-labeling)
//! ```
//!
//! Floats in the CSVs are printed with nine significant digits, matching the
//! in-memory quantization applied at recording time, so a write-read round
//! trip reproduces every value bit for bit.

use super::episode::{DataGenConfig, LabelMeta, FRAME_PERIOD};
use super::{fmt_sig9, vocab, Instruction, Role, Split, Task, Waypoints};
use crate::autolabel::PathMask;
use crate::pnm::{self, PnmError};
use crate::simworld::{CameraModel, Frame, Pose2D, World};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Episode;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: io error: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid json: {msg}")]
    Json { path: String, msg: String },
    #[error("{path}: byte {offset}: {msg}")]
    Format {
        path: String,
        offset: usize,
        msg: String,
    },
    #[error(transparent)]
    Pnm(#[from] PnmError),
    #[error("{path}: missing")]
    Missing { path: String },
}

fn disp(path: &Path) -> String {
    path.display().to_string()
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    if source.kind() == std::io::ErrorKind::NotFound {
        DatasetError::Missing { path: disp(path) }
    } else {
        DatasetError::Io {
            path: disp(path),
            source,
        }
    }
}

fn format_err(path: &Path, offset: usize, msg: impl Into<String>) -> DatasetError {
    DatasetError::Format {
        path: disp(path),
        offset,
        msg: msg.into(),
    }
}

/// One row of the manifest's episode index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEpisode {
    pub id: String,
    pub seed: u64,
    pub labeled: bool,
    pub split: Split,
    pub role: Role,
    pub frames: usize,
    pub duration: f64,
}

/// Top-level dataset description, stored as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Stable fingerprint of the generation config: `ds-` + 16 hex digits.
    pub dataset_id: String,
    pub seed: u64,
    /// Seconds between recorded frames.
    pub frame_period: f64,
    /// The caption vocabulary, index = token id.
    pub vocabulary: Vec<String>,
    pub episodes: Vec<ManifestEpisode>,
}

/// A fully loaded dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub episodes: Vec<Episode>,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Builds the manifest for a generated episode list. The dataset id hashes
/// the full generation config, so identical configs name identical datasets.
pub fn assemble_manifest(cfg: &DataGenConfig, episodes: &[Episode]) -> Manifest {
    let cfg_json = serde_json::to_string(cfg).expect("config serializes");
    Manifest {
        dataset_id: format!("ds-{:016x}", fnv1a64(cfg_json.as_bytes())),
        seed: cfg.seed,
        frame_period: FRAME_PERIOD,
        vocabulary: vocab().iter().map(|s| s.to_string()).collect(),
        episodes: episodes
            .iter()
            .map(|e| ManifestEpisode {
                id: e.id.clone(),
                seed: e.seed,
                labeled: e.labeled,
                split: e.split,
                role: e.role,
                frames: e.poses.len(),
                duration: e.duration(),
            })
            .collect(),
    }
}

/// Per-episode `meta.json` payload: everything that is not a frame, a mask,
/// or a per-frame numeric record.
#[derive(Serialize, Deserialize)]
struct EpisodeMeta {
    id: String,
    seed: u64,
    labeled: bool,
    split: Split,
    role: Role,
    task: Option<Task>,
    goal: [f64; 2],
    instruction: Instruction,
    camera: CameraModel,
    start: Pose2D,
    world: World,
    labels: Option<LabelMeta>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Json {
        path: disp(path),
        msg: e.to_string(),
    })
}

fn actions_header() -> String {
    let mut h = String::from("t");
    for k in 1..=8 {
        write!(&mut h, ",x{k},y{k},z{k}").expect("string write");
    }
    h
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<(), DatasetError> {
    let mut text = String::with_capacity(rows.len() * 64 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                text.push(',');
            }
            text.push_str(&fmt_sig9(*v));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Parses a CSV of f64 columns, reporting malformed content with the byte
/// offset of the offending field.
fn read_csv(path: &Path, header: &str, cols: usize) -> Result<Vec<Vec<f64>>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    let mut offset = 0usize;
    let mut saw_header = false;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed.is_empty() {
            continue;
        }
        if !saw_header {
            saw_header = true;
            if trimmed != header {
                return Err(format_err(
                    path,
                    line_start,
                    format!("bad header {:?}, expected {:?}", trimmed, header),
                ));
            }
            continue;
        }
        let mut row = Vec::with_capacity(cols);
        let mut field_off = line_start;
        for field in trimmed.split(',') {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(format_err(
                        path,
                        field_off,
                        format!("bad float {:?}", field),
                    ))
                }
            }
            field_off += field.len() + 1;
        }
        if row.len() != cols {
            return Err(format_err(
                path,
                line_start,
                format!("expected {} columns, got {}", cols, row.len()),
            ));
        }
        rows.push(row);
    }
    if !saw_header {
        return Err(format_err(path, 0, "empty file"));
    }
    Ok(rows)
}

fn frame_name(index: usize, ext: &str) -> String {
    format!("{:06}.{}", index, ext)
}

/// Writes one episode directory: meta, CSVs, frames, and masks if labeled.
pub fn write_episode(dir: &Path, ep: &Episode) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let meta = EpisodeMeta {
        id: ep.id.clone(),
        seed: ep.seed,
        labeled: ep.labeled,
        split: ep.split,
        role: ep.role,
        task: ep.task.clone(),
        goal: ep.goal,
        instruction: ep.instruction.clone(),
        camera: ep.camera,
        start: ep.start,
        world: ep.world.clone(),
        labels: ep.labels.clone(),
    };
    write_json(&dir.join("meta.json"), &meta)?;

    let pose_rows: Vec<Vec<f64>> = ep
        .times
        .iter()
        .zip(&ep.poses)
        .map(|(t, p)| vec![*t, p.x, p.y, p.theta])
        .collect();
    write_csv(&dir.join("poses.csv"), "t,x,y,theta", &pose_rows)?;

    let action_rows: Vec<Vec<f64>> = ep
        .times
        .iter()
        .zip(&ep.actions)
        .map(|(t, wps)| {
            let mut row = Vec::with_capacity(25);
            row.push(*t);
            for wp in wps {
                row.extend_from_slice(wp);
            }
            row
        })
        .collect();
    write_csv(&dir.join("actions.csv"), &actions_header(), &action_rows)?;

    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| io_err(&frames_dir, e))?;
    for (i, frame) in ep.frames.iter().enumerate() {
        pnm::write_ppm(
            &frames_dir.join(frame_name(i, "ppm")),
            frame.width,
            frame.height,
            &frame.rgb,
        )?;
    }

    if let Some(masks) = &ep.masks {
        let masks_dir = dir.join("masks");
        fs::create_dir_all(&masks_dir).map_err(|e| io_err(&masks_dir, e))?;
        for (i, mask) in masks.iter().enumerate() {
            pnm::write_pgm(
                &masks_dir.join(frame_name(i, "pgm")),
                mask.width,
                mask.height,
                &mask.to_bytes(),
            )?;
        }
    }
    Ok(())
}

/// Reads one episode directory back into memory, including frames and (when
/// present) masks.
pub fn read_episode(dir: &Path) -> Result<Episode, DatasetError> {
    let meta: EpisodeMeta = read_json(&dir.join("meta.json"))?;

    let poses_path = dir.join("poses.csv");
    let pose_rows = read_csv(&poses_path, "t,x,y,theta", 4)?;
    let n = pose_rows.len();
    let times: Vec<f64> = pose_rows.iter().map(|r| r[0]).collect();
    let poses: Vec<Pose2D> = pose_rows
        .iter()
        .map(|r| Pose2D {
            x: r[1],
            y: r[2],
            theta: r[3],
        })
        .collect();

    let actions_path = dir.join("actions.csv");
    let action_rows = read_csv(&actions_path, &actions_header(), 25)?;
    if action_rows.len() != n {
        return Err(format_err(
            &actions_path,
            0,
            format!("{} rows but poses.csv has {}", action_rows.len(), n),
        ));
    }
    let actions: Vec<Waypoints> = action_rows
        .iter()
        .map(|r| {
            let mut wps: Waypoints = [[0.0; 3]; 8];
            for (k, wp) in wps.iter_mut().enumerate() {
                wp.copy_from_slice(&r[1 + 3 * k..4 + 3 * k]);
            }
            wps
        })
        .collect();

    let frames_dir = dir.join("frames");
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let path = frames_dir.join(frame_name(i, "ppm"));
        if !path.exists() {
            return Err(DatasetError::Missing { path: disp(&path) });
        }
        let (w, h, rgb) = pnm::read_ppm(&path)?;
        if w != meta.camera.width || h != meta.camera.height {
            return Err(format_err(
                &path,
                0,
                format!(
                    "frame is {}x{} but the camera is {}x{}",
                    w, h, meta.camera.width, meta.camera.height
                ),
            ));
        }
        frames.push(Frame {
            width: w,
            height: h,
            rgb,
        });
    }

    let masks_dir = dir.join("masks");
    let masks = if masks_dir.is_dir() {
        let mut masks = Vec::with_capacity(n);
        for i in 0..n {
            let path = masks_dir.join(frame_name(i, "pgm"));
            if !path.exists() {
                return Err(DatasetError::Missing { path: disp(&path) });
            }
            let (w, h, gray) = pnm::read_pgm(&path)?;
            masks.push(PathMask::from_bytes(w, h, &gray));
        }
        Some(masks)
    } else {
        None
    };

    Ok(Episode {
        id: meta.id,
        seed: meta.seed,
        labeled: meta.labeled,
        split: meta.split,
        role: meta.role,
        task: meta.task,
        goal: meta.goal,
        instruction: meta.instruction,
        camera: meta.camera,
        start: meta.start,
        world: meta.world,
        times,
        poses,
        actions,
        frames,
        masks,
        labels: meta.labels,
    })
}

/// Writes `manifest.json` plus one directory per episode under `root`.
pub fn write_dataset(
    root: &Path,
    manifest: &Manifest,
    episodes: &[Episode],
) -> Result<(), DatasetError> {
    assert_eq!(manifest.episodes.len(), episodes.len());
    fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    write_json(&root.join("manifest.json"), manifest)?;
    for ep in episodes {
        write_episode(&root.join(&ep.id), ep)?;
    }
    Ok(())
}

/// Loads a dataset written by [`write_dataset`], validating each episode
/// against its manifest row.
pub fn read_dataset(root: &Path) -> Result<Dataset, DatasetError> {
    let manifest: Manifest = read_json(&root.join("manifest.json"))?;
    let mut episodes = Vec::with_capacity(manifest.episodes.len());
    for row in &manifest.episodes {
        let dir = root.join(&row.id);
        let ep = read_episode(&dir)?;
        if ep.id != row.id || ep.poses.len() != row.frames {
            return Err(format_err(
                &dir.join("meta.json"),
                0,
                format!(
                    "episode {:?} with {} frames does not match manifest row {:?} with {}",
                    ep.id,
                    ep.poses.len(),
                    row.id,
                    row.frames
                ),
            ));
        }
        episodes.push(ep);
    }
    Ok(Dataset { manifest, episodes })
}
