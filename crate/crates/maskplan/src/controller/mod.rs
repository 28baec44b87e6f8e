//! Sampling-based receding-horizon controller.
//!
//! `mpc_step` scores a fixed 11x11 grid of (v, omega) candidates by rolling
//! each one out with forward Euler and summing, over the simulated poses, the
//! minimum distance to the waypoint polyline, plus a small turn penalty.
//! Because the first waypoint sits 0.4 m ahead of the plan pose, standing
//! still is never free and the argmin always makes progress.
//! `run_closed_loop` wraps it into the full perceive-plan-act loop used by
//! evaluation and the `rollout` subcommand.

use crate::autolabel::PathMask;
use crate::expertdata::{Instruction, Task, TaskKind, Waypoints};
use crate::simworld::{render, step_unicycle, CameraModel, Frame, Pose2D, World};

/// Commanded twist. Forward-only: v in [0, 1] m/s, omega in [-1, 1] rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub v: f64,
    pub omega: f64,
}

/// Candidate grid resolution per axis.
const GRID_N: usize = 11;
/// Euler substeps in each candidate rollout (0.8 s ahead at the 0.1 s
/// control period).
const LOOKAHEAD_STEPS: usize = 8;
/// Weight of the |omega| smoothness term.
const TURN_COST: f64 = 0.1;
/// Costs within this of each other count as tied; sub-nanometer noise from
/// the distance arithmetic must not defeat the (higher v, straighter)
/// tie-break.
const COST_QUANTUM: f64 = 1e-9;

/// Distance from point `p` to the segment a-b.
fn point_segment_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let denom = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if denom > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Minimum distance from `p` to a polyline (a single vertex degenerates to a
/// point distance).
pub fn polyline_dist(p: [f64; 2], poly: &[[f64; 2]]) -> f64 {
    match poly.len() {
        0 => 0.0,
        1 => point_segment_dist(p, poly[0], poly[0]),
        _ => poly
            .windows(2)
            .map(|w| point_segment_dist(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// One controller tick: picks the best (v, omega) against the waypoint
/// polyline. `waypoints` are in the robot frame at `plan_pose`, the pose at
/// which they were emitted; `dt` is the caller's control period and sets the
/// rollout substep (8 substeps, so 0.8 s ahead at the closed loop's 0.1 s).
/// Ties resolve to higher v, then lower |omega|, then earlier enumeration
/// order, so the choice is deterministic.
pub fn mpc_step(state: Pose2D, waypoints: &Waypoints, plan_pose: Pose2D, dt: f64) -> ControlCommand {
    let reference: Vec<[f64; 2]> = waypoints
        .iter()
        .map(|wp| plan_pose.local_to_world([wp[0], wp[1]]))
        .collect();
    let mut best = ControlCommand { v: 0.0, omega: 0.0 };
    let mut best_key = i64::MAX;
    for vi in 0..GRID_N {
        let v = vi as f64 / (GRID_N - 1) as f64; // 0.0, 0.1, ... 1.0
        for wi in 0..GRID_N {
            let omega = -1.0 + 2.0 * wi as f64 / (GRID_N - 1) as f64;
            let mut p = state;
            let mut cost = TURN_COST * omega.abs();
            for _ in 0..LOOKAHEAD_STEPS {
                p = step_unicycle(p, v, omega, dt);
                cost += polyline_dist(p.xy(), &reference);
            }
            // Quantized so that float dust cannot defeat the tie-break.
            let key = (cost / COST_QUANTUM).round() as i64;
            let better = key < best_key
                || (key == best_key
                    && (v > best.v || (v == best.v && omega.abs() < best.omega.abs())));
            if better {
                best_key = key;
                best = ControlCommand { v, omega };
            }
        }
    }
    best
}

/// What the pilot sees at a replan tick.
pub struct PilotObs<'a> {
    pub frame: &'a Frame,
    pub instruction: &'a Instruction,
    /// Seed for this specific replan, derived from the trial seed.
    pub seed: u64,
    /// Current pose; neural pilots must ignore it, oracle test pilots may not.
    pub pose: Pose2D,
    pub t: f64,
}

/// A pilot's output: an optional visual plan plus 8 robot-frame waypoints.
pub struct PilotPlan {
    pub mask: Option<PathMask>,
    pub waypoints: Waypoints,
}

/// Anything that can turn an observation into waypoints: the trained
/// planner+grounding stack, or oracle hooks in tests.
pub trait Pilot {
    fn plan(&mut self, obs: &PilotObs) -> PilotPlan;
}

/// Why a closed-loop run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GoalReached,
    Collision,
    TerrainBudget,
    Timeout,
}

#[derive(Debug, Clone)]
pub struct LogRow {
    pub t: f64,
    pub pose: Pose2D,
    pub v: f64,
    pub omega: f64,
    /// "replan", "collision", "goal", "terrain_budget", "timeout", or "".
    pub event: String,
}

/// Everything recorded at one replan tick.
pub struct ReplanRecord {
    pub t: f64,
    pub pose: Pose2D,
    pub frame: Frame,
    pub mask: Option<PathMask>,
    /// Waypoints transformed into the world frame.
    pub waypoints_world: Vec<[f64; 2]>,
}

pub struct RolloutLog {
    pub rows: Vec<LogRow>,
    pub replans: Vec<ReplanRecord>,
    pub final_pose: Pose2D,
    pub duration: f64,
    pub min_goal_dist: f64,
    pub collision_count: usize,
    /// Seconds spent on non-preferred terrain (TerrainPref tasks only).
    pub terrain_time: f64,
    pub terminated: Termination,
    pub max_time: f64,
}

#[derive(Debug, Clone)]
pub struct LoopConfig {
    /// Control period, seconds.
    pub dt: f64,
    /// Replan period, seconds.
    pub replan_period: f64,
    pub max_time: f64,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            dt: 0.1,
            replan_period: 0.25,
            max_time: 60.0,
            seed: 0,
        }
    }
}

/// Distance at which the loop declares the goal reached; comfortably inside
/// the 0.5 m success radius so the judge never flips on rounding.
const GOAL_STOP_DIST: f64 = 0.35;
/// Non-preferred terrain budget in seconds (TerrainPref tasks).
const TERRAIN_BUDGET_S: f64 = 2.0;

/// Runs the full perceive-plan-act loop until the goal, a failed rule, or
/// max_time. The first collision terminates the run.
pub fn run_closed_loop(
    world: &World,
    camera: &CameraModel,
    start: Pose2D,
    task: Option<&Task>,
    goal: [f64; 2],
    instruction: &Instruction,
    pilot: &mut dyn Pilot,
    cfg: &LoopConfig,
) -> RolloutLog {
    let mut pose = start;
    let mut t = 0.0f64;
    let mut rows = Vec::new();
    let mut replans = Vec::new();
    let mut plan_wps: Waypoints = [[0.0; 3]; 8];
    let mut plan_pose = start;
    let mut next_replan = 0.0f64;
    let mut replan_idx = 0u64;
    let mut min_goal_dist = f64::INFINITY;
    let mut collision_count = 0usize;
    let mut terrain_time = 0.0f64;
    let terrain_pref = task.and_then(|tk| match tk.kind {
        TaskKind::TerrainPref { prefer } => Some(prefer),
        _ => None,
    });

    let dist_to_goal = |p: Pose2D| ((p.x - goal[0]).powi(2) + (p.y - goal[1]).powi(2)).sqrt();
    min_goal_dist = min_goal_dist.min(dist_to_goal(pose));

    let terminated = loop {
        let mut event = String::new();
        if t >= next_replan - 1e-9 {
            let frame = render(world, pose, camera);
            let obs = PilotObs {
                frame: &frame,
                instruction,
                seed: crate::simworld::derive_seed(cfg.seed, "replan", replan_idx),
                pose,
                t,
            };
            let plan = pilot.plan(&obs);
            plan_wps = plan.waypoints;
            plan_pose = pose;
            replans.push(ReplanRecord {
                t,
                pose,
                frame,
                mask: plan.mask,
                waypoints_world: plan_wps
                    .iter()
                    .map(|wp| plan_pose.local_to_world([wp[0], wp[1]]))
                    .collect(),
            });
            replan_idx += 1;
            next_replan += cfg.replan_period.max(cfg.dt);
            event = "replan".to_string();
        }

        let cmd = mpc_step(pose, &plan_wps, plan_pose, cfg.dt);
        pose = step_unicycle(pose, cmd.v, cmd.omega, cfg.dt);
        t += cfg.dt;
        let state = world.query_state(pose);
        let d = dist_to_goal(pose);
        min_goal_dist = min_goal_dist.min(d);

        if state.collided {
            collision_count += 1;
            rows.push(LogRow {
                t,
                pose,
                v: cmd.v,
                omega: cmd.omega,
                event: "collision".to_string(),
            });
            break Termination::Collision;
        }
        if let Some(prefer) = terrain_pref {
            if state.terrain != prefer {
                terrain_time += cfg.dt;
                if terrain_time > TERRAIN_BUDGET_S + 1e-9 {
                    rows.push(LogRow {
                        t,
                        pose,
                        v: cmd.v,
                        omega: cmd.omega,
                        event: "terrain_budget".to_string(),
                    });
                    break Termination::TerrainBudget;
                }
            }
        }
        if d <= GOAL_STOP_DIST {
            rows.push(LogRow {
                t,
                pose,
                v: cmd.v,
                omega: cmd.omega,
                event: "goal".to_string(),
            });
            break Termination::GoalReached;
        }
        if t >= cfg.max_time - 1e-9 {
            rows.push(LogRow {
                t,
                pose,
                v: cmd.v,
                omega: cmd.omega,
                event: "timeout".to_string(),
            });
            break Termination::Timeout;
        }
        rows.push(LogRow {
            t,
            pose,
            v: cmd.v,
            omega: cmd.omega,
            event,
        });
    };

    RolloutLog {
        rows,
        replans,
        final_pose: pose,
        duration: t,
        min_goal_dist,
        collision_count,
        terrain_time,
        terminated,
        max_time: cfg.max_time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 8 waypoints 0.4 m apart straight ahead, the canonical action layout.
    fn straight_waypoints() -> Waypoints {
        let mut wps = [[0.0; 3]; 8];
        for (k, wp) in wps.iter_mut().enumerate() {
            wp[0] = 0.4 * (k + 1) as f64;
        }
        wps
    }

    #[test]
    fn straight_waypoints_ahead_pick_full_speed_no_turn() {
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        let cmd = mpc_step(pose, &straight_waypoints(), pose, 0.1);
        assert_eq!(cmd.v, 1.0, "expected max speed, got {:?}", cmd);
        assert_eq!(cmd.omega, 0.0, "expected straight, got {:?}", cmd);
    }

    #[test]
    fn waypoints_at_the_robot_are_a_stop_fixpoint() {
        // All waypoints at the robot: any motion increases cost, so (0, 0)
        // wins the argmin outright, not merely by tie-break.
        let pose = Pose2D::new(2.0, 3.0, 0.4);
        let cmd = mpc_step(pose, &[[0.0; 3]; 8], pose, 0.1);
        assert_eq!(cmd, ControlCommand { v: 0.0, omega: 0.0 });
    }

    #[test]
    fn waypoints_to_the_left_turn_left() {
        // Waypoints every 0.4 m of arc along a left quarter circle of radius
        // 2.04 (so 8 waypoints stay within the quarter).
        let r = 2.04;
        let mut wps = [[0.0; 3]; 8];
        for (k, wp) in wps.iter_mut().enumerate() {
            let a = 0.4 * (k + 1) as f64 / r;
            wp[0] = r * a.sin();
            wp[1] = r * (1.0 - a.cos());
        }
        let pose = Pose2D::new(0.0, 0.0, 0.0);
        let cmd = mpc_step(pose, &wps, pose, 0.1);
        assert!(cmd.omega > 0.0, "expected left turn, got {:?}", cmd);
        assert!(cmd.v > 0.5, "expected forward progress, got {:?}", cmd);

        // Brute-force cross-check: the best pure-right candidate costs more
        // than the chosen left one.
        let reference: Vec<[f64; 2]> = wps.iter().map(|wp| [wp[0], wp[1]]).collect();
        let cost = |v: f64, omega: f64| {
            let mut p = pose;
            let mut c = TURN_COST * omega.abs();
            for _ in 0..LOOKAHEAD_STEPS {
                p = step_unicycle(p, v, omega, 0.1);
                c += polyline_dist(p.xy(), &reference);
            }
            c
        };
        let chosen = cost(cmd.v, cmd.omega);
        for wi in 0..GRID_N {
            let omega = -1.0 + 2.0 * wi as f64 / (GRID_N - 1) as f64;
            if omega >= 0.0 {
                continue;
            }
            for vi in 0..GRID_N {
                let v = vi as f64 / (GRID_N - 1) as f64;
                assert!(
                    cost(v, omega) > chosen,
                    "right-turn candidate ({}, {}) undercuts the winner",
                    v,
                    omega
                );
            }
        }
    }

    #[test]
    fn choice_is_deterministic() {
        let pose = Pose2D::new(0.3, -0.2, 0.15);
        let wps = straight_waypoints();
        let a = mpc_step(pose, &wps, pose, 0.1);
        let b = mpc_step(pose, &wps, pose, 0.1);
        assert_eq!(a, b, "mpc_step must be deterministic");
    }

    #[test]
    fn plan_frame_is_respected_after_the_robot_moves_on() {
        // Waypoints were emitted at the origin pointing +x; the robot has
        // since drifted left of the line, so it should steer right, back
        // toward the old plan, rather than extend its own heading.
        let plan_pose = Pose2D::new(0.0, 0.0, 0.0);
        let state = Pose2D::new(0.5, 0.3, 0.0);
        let cmd = mpc_step(state, &straight_waypoints(), plan_pose, 0.1);
        assert!(cmd.omega < 0.0, "expected right correction, got {:?}", cmd);
    }

    #[test]
    fn point_segment_distance_basics() {
        assert!((point_segment_dist([0.0, 1.0], [0.0, 0.0], [2.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((point_segment_dist([-1.0, 0.0], [0.0, 0.0], [2.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((point_segment_dist([3.0, 0.0], [0.0, 0.0], [2.0, 0.0]) - 1.0).abs() < 1e-12);
    }
}
