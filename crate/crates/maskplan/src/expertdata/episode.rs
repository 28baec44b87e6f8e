//! Episode rollout and dataset generation.
//!
//! An episode is one expert demonstration: the robot tracks an A* path with
//! the sampling controller at 20 Hz while egocentric frames, poses, and
//! waypoint targets are recorded at 4 Hz. Generation validates every substep
//! against the world (collisions, bounds, terrain) and resamples a fresh
//! world deterministically when a rollout violates the task contract.

use super::{
    caption_task, null_instruction, plan_expert_path, sig9, waypoints_from_path, Instruction,
    PlanError, Role, Split, Task, TaskKind, Waypoints,
};
use crate::autolabel::PathMask;
use crate::controller::mpc_step;
use crate::simworld::{
    derive_seed, gen_world, render, step_unicycle, CameraModel, Frame, Pose2D, TerrainClass,
    World, WorldGenConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Seconds between recorded frames (4 Hz).
pub const FRAME_PERIOD: f64 = 0.25;
/// Expert control substep, seconds (20 Hz).
pub const EXPERT_DT: f64 = 0.05;
/// Expert rollouts stop when this close to the goal, meters.
pub const EXPERT_GOAL_DIST: f64 = 0.3;
/// World resamples per episode index before generation gives up.
const MAX_RETRIES: u64 = 24;

/// Labels attached to an episode by the auto-labeler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMeta {
    /// "oracle" or "correlation".
    pub tracker: String,
    /// Per-frame flag: true when the fitted mask came out empty.
    pub empty_mask: Vec<bool>,
    /// Per-frame count of breadcrumbs visible when the mask was fitted.
    pub visible_points: Vec<usize>,
}

/// One recorded demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub seed: u64,
    pub labeled: bool,
    pub split: Split,
    pub role: Role,
    /// None for task-agnostic (null-instruction) episodes.
    pub task: Option<Task>,
    pub goal: [f64; 2],
    pub instruction: Instruction,
    pub camera: CameraModel,
    pub start: Pose2D,
    pub world: World,
    /// Frame timestamps, seconds; quantized to 9 significant digits.
    pub times: Vec<f64>,
    /// Robot pose at each frame; quantized.
    pub poses: Vec<Pose2D>,
    /// Supervision: 8 robot-frame waypoints per frame; quantized.
    pub actions: Vec<Waypoints>,
    #[serde(skip)]
    pub frames: Vec<Frame>,
    /// Filled by the auto-labeler; None straight out of generation.
    #[serde(skip)]
    pub masks: Option<Vec<PathMask>>,
    pub labels: Option<LabelMeta>,
}

impl Episode {
    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("expert planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error("expert rollout collided at t={t:.2}")]
    Collision { t: f64 },
    #[error("expert rollout left the world at t={t:.2}")]
    OutOfBounds { t: f64 },
    #[error("expert rollout touched non-preferred terrain at t={t:.2}")]
    TerrainViolation { t: f64 },
    #[error("expert rollout exceeded {frames} frames without reaching the goal")]
    Overrun { frames: usize },
    #[error("episode {index}: no valid world after {retries} resamples")]
    Exhausted { index: usize, retries: u64 },
}

/// Identity and bookkeeping for one episode rollout.
#[derive(Debug, Clone)]
pub struct EpisodeParams {
    pub id: String,
    pub seed: u64,
    pub labeled: bool,
    pub split: Split,
    pub role: Role,
    pub max_frames: usize,
}

/// Rolls the controller along the expert path, recording frames at 4 Hz.
/// Every 50 ms substep is validated: a collision, bounds exit, or (for
/// TerrainPref) any time at all on non-preferred terrain fails the episode.
pub fn generate_episode(
    world: World,
    camera: CameraModel,
    task: Option<Task>,
    goal: [f64; 2],
    instruction: Instruction,
    start: Pose2D,
    params: EpisodeParams,
) -> Result<Episode, GenError> {
    let path = plan_expert_path(&world, goal, task.as_ref().map(|t| &t.kind), start.xy())?;
    let prefer = task.as_ref().and_then(|t| match t.kind {
        TaskKind::TerrainPref { prefer } => Some(prefer),
        _ => None,
    });
    let substeps = (FRAME_PERIOD / EXPERT_DT).round() as usize;

    let mut sim = start;
    let mut t = 0.0f64;
    let mut times = Vec::new();
    let mut poses = Vec::new();
    let mut frames = Vec::new();
    let mut actions = Vec::new();

    loop {
        let rec = Pose2D::new(sig9(sim.x), sig9(sim.y), sig9(sim.theta));
        times.push(sig9(t));
        frames.push(render(&world, rec, &camera));
        let mut wps = waypoints_from_path(&path, rec);
        for wp in &mut wps {
            *wp = [sig9(wp[0]), sig9(wp[1]), 0.0];
        }
        actions.push(wps);
        poses.push(rec);

        let d = ((sim.x - goal[0]).powi(2) + (sim.y - goal[1]).powi(2)).sqrt();
        if d <= EXPERT_GOAL_DIST {
            break;
        }
        if times.len() >= params.max_frames {
            return Err(GenError::Overrun {
                frames: params.max_frames,
            });
        }

        for _ in 0..substeps {
            // The expert drives by tracking the same waypoint labels it
            // records, recomputed every substep: a 0.4 m carrot that matches
            // the deployment-time controller exactly.
            let wps = waypoints_from_path(&path, sim);
            let cmd = mpc_step(sim, &wps, sim, EXPERT_DT);
            sim = step_unicycle(sim, cmd.v, cmd.omega, EXPERT_DT);
            t += EXPERT_DT;
            let state = world.query_state(sim);
            if state.collided {
                return Err(GenError::Collision { t });
            }
            if state.out_of_bounds {
                return Err(GenError::OutOfBounds { t });
            }
            if let Some(p) = prefer {
                if state.terrain != p {
                    return Err(GenError::TerrainViolation { t });
                }
            }
        }
        // Re-derive t from the frame index so timestamps stay exact
        // multiples of the frame period.
        t = times.len() as f64 * FRAME_PERIOD;
    }

    Ok(Episode {
        id: params.id,
        seed: params.seed,
        labeled: params.labeled,
        split: params.split,
        role: params.role,
        task,
        goal,
        instruction,
        camera,
        start,
        world,
        times,
        poses,
        actions,
        frames,
        masks: None,
        labels: None,
    })
}

/// Builds an episode by placing poses directly along a polyline at 0.25 m
/// arc steps (nominal 1 m/s at 4 Hz), headings tangent to the path. No
/// planner or controller involved; used for staged scenes in tests and
/// examples where exact geometry matters more than dynamics.
pub fn episode_from_polyline(
    world: World,
    camera: CameraModel,
    path: &[[f64; 2]],
    id: &str,
) -> Episode {
    assert!(path.len() >= 2, "polyline needs at least 2 vertices");
    let step = 1.0 * FRAME_PERIOD;
    let mut cum = vec![0.0f64];
    for w in path.windows(2) {
        let len = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        cum.push(cum.last().unwrap() + len);
    }
    let total = *cum.last().unwrap();
    let n = (total / step).floor() as usize + 1;
    let point_at = |s: f64| -> ([f64; 2], f64) {
        let s = s.min(total);
        let mut i = 0;
        while i + 2 < cum.len() && cum[i + 1] < s {
            i += 1;
        }
        let seg = cum[i + 1] - cum[i];
        let t = if seg > 0.0 { (s - cum[i]) / seg } else { 0.0 };
        let p = [
            path[i][0] + t * (path[i + 1][0] - path[i][0]),
            path[i][1] + t * (path[i + 1][1] - path[i][1]),
        ];
        let theta = (path[i + 1][1] - path[i][1]).atan2(path[i + 1][0] - path[i][0]);
        (p, theta)
    };
    let mut times = Vec::with_capacity(n);
    let mut poses = Vec::with_capacity(n);
    let mut frames = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    for k in 0..n {
        let (p, theta) = point_at(k as f64 * step);
        let rec = Pose2D::new(sig9(p[0]), sig9(p[1]), sig9(theta));
        times.push(sig9(k as f64 * FRAME_PERIOD));
        frames.push(render(&world, rec, &camera));
        let mut wps = waypoints_from_path(path, rec);
        for wp in &mut wps {
            *wp = [sig9(wp[0]), sig9(wp[1]), 0.0];
        }
        actions.push(wps);
        poses.push(rec);
    }
    let goal = *path.last().unwrap();
    let start = poses[0];
    Episode {
        id: id.to_string(),
        seed: 0,
        labeled: false,
        split: Split::Seen,
        role: Role::Train,
        task: None,
        goal,
        instruction: null_instruction(),
        camera,
        start,
        world,
        times,
        poses,
        actions,
        frames,
        masks: None,
        labels: None,
    }
}

/// Dataset generation knobs. Unknown keys in config files are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataGenConfig {
    pub seed: u64,
    pub episodes: usize,
    /// Fraction of episodes that get a task and caption; the rest are
    /// task-agnostic with the null instruction.
    pub labeled_fraction: f64,
    /// Fraction of the labeled episodes held out with role "test".
    pub test_fraction: f64,
    /// Straight-line start-to-goal distance range, meters.
    pub goal_range: [f64; 2],
    pub max_frames: usize,
    /// Generate worlds with the unseen color/class palette.
    pub unseen: bool,
    /// Relative draw weights for GoTo / Avoid / KeepDistance / TerrainPref.
    pub task_weights: [f64; 4],
    pub keep_distance_margin: f64,
    /// Worker threads; output is byte-identical for any value.
    pub jobs: usize,
    pub world: WorldGenConfig,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        DataGenConfig {
            seed: 0,
            episodes: 200,
            labeled_fraction: 0.15,
            test_fraction: 0.2,
            goal_range: [2.5, 4.5],
            max_frames: 80,
            unseen: false,
            task_weights: [0.4, 0.2, 0.2, 0.2],
            keep_distance_margin: 1.0,
            jobs: 1,
            world: WorldGenConfig::default(),
        }
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn seg_point_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let denom = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if denom > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p[0] - a[0] - t * ab[0]).powi(2) + (p[1] - a[1] - t * ab[1]).powi(2)).sqrt()
}

/// Samples a free point, optionally constrained to a terrain class.
fn sample_point(
    rng: &mut ChaCha8Rng,
    world: &World,
    prefer: Option<TerrainClass>,
) -> Option<[f64; 2]> {
    for _ in 0..80 {
        let p = [
            rng.gen_range(1.5..world.extent[0] - 1.5),
            rng.gen_range(1.5..world.extent[1] - 1.5),
        ];
        if !world.free_at(p, 0.6) {
            continue;
        }
        if let Some(tc) = prefer {
            if world.terrain.class_at_clamped(p) != tc {
                continue;
            }
        }
        return Some(p);
    }
    None
}

/// Samples a start pose at goal-range distance, facing roughly toward the
/// goal. When `near` is given, prefers starts whose straight line to the
/// goal passes within the stated distance of that point, so avoidance tasks
/// are not trivially satisfied.
fn sample_start(
    rng: &mut ChaCha8Rng,
    world: &World,
    goal: [f64; 2],
    range: [f64; 2],
    prefer: Option<TerrainClass>,
    near: Option<([f64; 2], f64)>,
) -> Option<Pose2D> {
    let mut fallback: Option<Pose2D> = None;
    for _ in 0..80 {
        let ang = rng.gen_range(0.0..std::f64::consts::TAU);
        let d = rng.gen_range(range[0]..range[1]);
        let p = [goal[0] - d * ang.cos(), goal[1] - d * ang.sin()];
        if p[0] < 1.0 || p[1] < 1.0 || p[0] > world.extent[0] - 1.0 || p[1] > world.extent[1] - 1.0
        {
            continue;
        }
        if !world.free_at(p, 0.6) {
            continue;
        }
        if let Some(tc) = prefer {
            if world.terrain.class_at_clamped(p) != tc {
                continue;
            }
        }
        let heading = (goal[1] - p[1]).atan2(goal[0] - p[0]) + rng.gen_range(-0.5..0.5);
        let pose = Pose2D::new(p[0], p[1], heading);
        match near {
            Some((c, within)) => {
                if seg_point_dist(c, p, goal) < within {
                    return Some(pose);
                }
                if fallback.is_none() {
                    fallback = Some(pose);
                }
            }
            None => return Some(pose),
        }
    }
    fallback
}

/// Draws a task, goal, and start for a labeled episode, or just a goal and
/// start for an agnostic one. None means this world cannot stage the draw.
fn sample_scenario(
    rng: &mut ChaCha8Rng,
    world: &World,
    cfg: &DataGenConfig,
    labeled: bool,
) -> Option<(Option<Task>, [f64; 2], Pose2D)> {
    if !labeled {
        let goal = sample_point(rng, world, None)?;
        let start = sample_start(rng, world, goal, cfg.goal_range, None, None)?;
        if dist2(start.xy(), goal) < cfg.goal_range[0].powi(2) * 0.9 {
            return None;
        }
        return Some((None, goal, start));
    }
    let wsum: f64 = cfg.task_weights.iter().sum();
    let mut roll = rng.gen_range(0.0..wsum);
    let mut kind_idx = 0;
    for (i, w) in cfg.task_weights.iter().enumerate() {
        if roll < *w {
            kind_idx = i;
            break;
        }
        roll -= w;
    }
    match kind_idx {
        0 => {
            // GoTo: the goal is an object's center.
            if world.objects.is_empty() {
                return None;
            }
            let object = rng.gen_range(0..world.objects.len());
            let goal = world.objects[object].center;
            let start = sample_start(rng, world, goal, cfg.goal_range, None, None)?;
            Some((
                Some(Task {
                    kind: TaskKind::GoTo { object },
                    goal,
                }),
                goal,
                start,
            ))
        }
        1 => {
            // Avoid: pick an obstacle, avoid its whole class.
            if world.obstacles.is_empty() {
                return None;
            }
            let ob = &world.obstacles[rng.gen_range(0..world.obstacles.len())];
            let goal = sample_point(rng, world, None)?;
            let near = Some((ob.center, ob.radius + super::astar::AVOID_RADIUS));
            let start = sample_start(rng, world, goal, cfg.goal_range, None, near)?;
            Some((
                Some(Task {
                    kind: TaskKind::Avoid { class: ob.class },
                    goal,
                }),
                goal,
                start,
            ))
        }
        2 => {
            // KeepDistance from a named object.
            if world.objects.is_empty() {
                return None;
            }
            let object = rng.gen_range(0..world.objects.len());
            let margin = cfg.keep_distance_margin;
            let center = world.objects[object].center;
            let mut goal = None;
            for _ in 0..40 {
                let g = sample_point(rng, world, None)?;
                if dist2(g, center).sqrt() > margin + 0.4 {
                    goal = Some(g);
                    break;
                }
            }
            let goal = goal?;
            let start = sample_start(
                rng,
                world,
                goal,
                cfg.goal_range,
                None,
                Some((center, margin)),
            )?;
            if dist2(start.xy(), center).sqrt() <= margin + 0.3 {
                return None;
            }
            Some((
                Some(Task {
                    kind: TaskKind::KeepDistance { object, margin },
                    goal,
                }),
                goal,
                start,
            ))
        }
        _ => {
            // TerrainPref: stay on sidewalk or grass.
            let prefer = if world.terrain.classes.contains(&TerrainClass::Sidewalk)
                && rng.gen_bool(0.5)
            {
                TerrainClass::Sidewalk
            } else {
                TerrainClass::Grass
            };
            let goal = sample_point(rng, world, Some(prefer))?;
            let start = sample_start(rng, world, goal, cfg.goal_range, Some(prefer), None)?;
            Some((
                Some(Task {
                    kind: TaskKind::TerrainPref { prefer },
                    goal,
                }),
                goal,
                start,
            ))
        }
    }
}

/// Generates one episode by its index, resampling worlds until the rollout
/// validates. Fully determined by (cfg, index), independent of thread count.
pub fn gen_episode_by_index(cfg: &DataGenConfig, index: usize) -> Result<Episode, GenError> {
    let n_labeled = (cfg.episodes as f64 * cfg.labeled_fraction).round() as usize;
    let n_test = (n_labeled as f64 * cfg.test_fraction).round() as usize;
    let labeled = index < n_labeled;
    let role = if labeled && index >= n_labeled - n_test {
        Role::Test
    } else {
        Role::Train
    };
    let split = if cfg.unseen { Split::Unseen } else { Split::Seen };
    let mut world_cfg = cfg.world.clone();
    world_cfg.unseen_palette = cfg.unseen;

    for retry in 0..MAX_RETRIES {
        let eseed = derive_seed(cfg.seed, "episode", ((index as u64) << 8) | retry);
        let world = gen_world(eseed, &world_cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(eseed, "scenario", 0));
        let (task, goal, start) = match sample_scenario(&mut rng, &world, cfg, labeled) {
            Some(s) => s,
            None => continue,
        };
        let instruction = match &task {
            Some(t) => caption_task(t, &world, eseed),
            None => null_instruction(),
        };
        let params = EpisodeParams {
            id: format!("ep{:06}", index),
            seed: eseed,
            labeled,
            split,
            role,
            max_frames: cfg.max_frames,
        };
        match generate_episode(
            world,
            CameraModel::default(),
            task,
            goal,
            instruction,
            start,
            params,
        ) {
            Ok(ep) => return Ok(ep),
            Err(GenError::Exhausted { .. }) => unreachable!(),
            Err(_) => continue,
        }
    }
    Err(GenError::Exhausted {
        index,
        retries: MAX_RETRIES,
    })
}

/// Generates the full episode list. `cfg.jobs` worker threads split the
/// indices; results are assembled in index order so the dataset is
/// byte-identical regardless of parallelism.
pub fn gen_dataset(cfg: &DataGenConfig) -> Result<Vec<Episode>, GenError> {
    let jobs = cfg.jobs.max(1).min(cfg.episodes.max(1));
    if jobs <= 1 {
        return (0..cfg.episodes)
            .map(|i| gen_episode_by_index(cfg, i))
            .collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<Episode, GenError>>>> =
        (0..cfg.episodes).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= cfg.episodes {
                    break;
                }
                let ep = gen_episode_by_index(cfg, i);
                *slots[i].lock().unwrap() = Some(ep);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("all indices processed"))
        .collect()
}
