//! Grid A* expert planner with task-dependent soft costs.
//!
//! The world is discretized to 0.5 m cells. Cells whose centers fall inside
//! an inflated obstacle disc (radius + robot radius + 0.1 m) or on the outer
//! boundary ring are blocked. Every other cell carries a multiplicative cost:
//! non-preferred terrain adds a 5.0 penalty under `TerrainPref`, and cells
//! inside a `KeepDistance` margin or within 0.8 m of an `Avoid`-class
//! obstacle cost 10x. Moving into a cell costs the step length (1 or sqrt 2)
//! times the cell's multiplier, so soft regions are crossed only when there
//! is no reasonable way around. The raw cell path is then shortcut-smoothed,
//! but only across cost-1 cells so penalty detours survive smoothing.

use super::TaskKind;
use crate::simworld::{World, ROBOT_RADIUS};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Grid cell size in meters; matches the terrain grid.
pub const PLAN_CELL: f64 = 0.5;
/// Obstacle inflation beyond the robot radius, meters.
pub const INFLATION_MARGIN: f64 = 0.1;
/// Terrain penalty added to non-preferred cells under `TerrainPref`.
pub const TERRAIN_PENALTY: f64 = 5.0;
/// Multiplier for keep-distance / avoid proximity cells.
pub const PROXIMITY_MULT: f64 = 10.0;
/// Radius around an avoided obstacle's surface that costs extra.
pub const AVOID_RADIUS: f64 = 0.8;
/// Sampling step when validating shortcut segments, meters.
const SHORTCUT_STEP: f64 = 0.05;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum PlanError {
    #[error("start ({0:.2}, {1:.2}) is outside the world")]
    StartOutOfBounds(f64, f64),
    #[error("goal ({0:.2}, {1:.2}) is outside the world")]
    GoalOutOfBounds(f64, f64),
    #[error("goal cell is blocked")]
    GoalBlocked,
    #[error("no path from start to goal")]
    Unreachable,
}

/// The discretized cost field A* searches over.
pub struct PlanGrid {
    pub nx: usize,
    pub ny: usize,
    pub cell: f64,
    /// Hard-blocked cells (inflated obstacles, boundary ring).
    pub blocked: Vec<bool>,
    /// Multiplicative cost per cell, 1.0 for free cells.
    pub mult: Vec<f64>,
}

impl PlanGrid {
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        if p[0] < 0.0 || p[1] < 0.0 {
            return None;
        }
        let ix = (p[0] / self.cell).floor() as usize;
        let iy = (p[1] / self.cell).floor() as usize;
        if ix >= self.nx || iy >= self.ny {
            return None;
        }
        Some((ix, iy))
    }

    pub fn center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            (ix as f64 + 0.5) * self.cell,
            (iy as f64 + 0.5) * self.cell,
        ]
    }
}

/// Builds the blocked/cost grid for a world and an optional task. `None`
/// means plain goal navigation with no soft costs (task-agnostic episodes).
pub fn build_plan_grid(world: &World, kind: Option<&TaskKind>) -> PlanGrid {
    let nx = (world.extent[0] / PLAN_CELL).round() as usize;
    let ny = (world.extent[1] / PLAN_CELL).round() as usize;
    let mut blocked = vec![false; nx * ny];
    let mut mult = vec![1.0f64; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            if ix == 0 || iy == 0 || ix == nx - 1 || iy == ny - 1 {
                blocked[i] = true;
                continue;
            }
            let c = [
                (ix as f64 + 0.5) * PLAN_CELL,
                (iy as f64 + 0.5) * PLAN_CELL,
            ];
            for ob in &world.obstacles {
                let d = ((c[0] - ob.center[0]).powi(2) + (c[1] - ob.center[1]).powi(2)).sqrt();
                if d < ob.radius + ROBOT_RADIUS + INFLATION_MARGIN {
                    blocked[i] = true;
                    break;
                }
            }
            if blocked[i] {
                continue;
            }
            let mut m = 1.0;
            match kind {
                Some(TaskKind::TerrainPref { prefer }) => {
                    if world.terrain.class_at_clamped(c) != *prefer {
                        m *= 1.0 + TERRAIN_PENALTY;
                    }
                }
                Some(TaskKind::KeepDistance { object, margin }) => {
                    let ob = &world.objects[*object];
                    let d =
                        ((c[0] - ob.center[0]).powi(2) + (c[1] - ob.center[1]).powi(2)).sqrt();
                    if d < *margin {
                        m *= PROXIMITY_MULT;
                    }
                }
                Some(TaskKind::Avoid { class }) => {
                    for ob in &world.obstacles {
                        if ob.class == *class {
                            let d = ((c[0] - ob.center[0]).powi(2)
                                + (c[1] - ob.center[1]).powi(2))
                            .sqrt()
                                - ob.radius;
                            if d < AVOID_RADIUS {
                                m *= PROXIMITY_MULT;
                                break;
                            }
                        }
                    }
                }
                Some(TaskKind::GoTo { .. }) | None => {}
            }
            mult[i] = m;
        }
    }
    PlanGrid {
        nx,
        ny,
        cell: PLAN_CELL,
        blocked,
        mult,
    }
}

/// Heap entry ordered so the max-heap pops lowest f first, breaking ties by
/// highest g (deeper nodes first) and then lowest cell index. The ordering is
/// total because costs are never NaN.
#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    idx: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .partial_cmp(&self.f)
            .unwrap()
            .then(self.g.partial_cmp(&other.g).unwrap())
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(i64, i64, f64); 8] = [
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, std::f64::consts::SQRT_2),
    (1, -1, std::f64::consts::SQRT_2),
    (-1, 1, std::f64::consts::SQRT_2),
    (-1, -1, std::f64::consts::SQRT_2),
];

/// A* over the plan grid. Returns the cell-index path from start cell to
/// goal cell inclusive, or None when unreachable.
fn astar_cells(grid: &PlanGrid, start: (usize, usize), goal: (usize, usize)) -> Option<Vec<usize>> {
    let n = grid.nx * grid.ny;
    let s = grid.idx(start.0, start.1);
    let t = grid.idx(goal.0, goal.1);
    let h = |i: usize| -> f64 {
        let (ix, iy) = ((i % grid.nx) as f64, (i / grid.nx) as f64);
        let (gx, gy) = (goal.0 as f64, goal.1 as f64);
        ((ix - gx).powi(2) + (iy - gy).powi(2)).sqrt()
    };
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[s] = 0.0;
    open.push(Open {
        f: h(s),
        g: 0.0,
        idx: s,
    });
    while let Some(Open { idx, g: gc, .. }) = open.pop() {
        if closed[idx] || gc > g[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == t {
            let mut path = vec![idx];
            let mut cur = idx;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        let (ix, iy) = ((idx % grid.nx) as i64, (idx / grid.nx) as i64);
        for &(dx, dy, step) in &NEIGHBORS {
            let (jx, jy) = (ix + dx, iy + dy);
            if jx < 0 || jy < 0 || jx >= grid.nx as i64 || jy >= grid.ny as i64 {
                continue;
            }
            let j = grid.idx(jx as usize, jy as usize);
            if grid.blocked[j] && j != s {
                continue;
            }
            // No cutting corners: a diagonal move needs both orthogonal
            // neighbors free.
            if dx != 0 && dy != 0 {
                let a = grid.idx(jx as usize, iy as usize);
                let b = grid.idx(ix as usize, jy as usize);
                if grid.blocked[a] || grid.blocked[b] {
                    continue;
                }
            }
            let cand = g[idx] + step * grid.mult[j];
            if cand < g[j] - 1e-12 {
                g[j] = cand;
                parent[j] = idx;
                open.push(Open {
                    f: cand + h(j),
                    g: cand,
                    idx: j,
                });
            }
        }
    }
    None
}

/// True when the straight segment a-b stays on unit-cost cells and keeps a
/// safe margin from obstacles, so smoothing may take the shortcut.
fn segment_clean(grid: &PlanGrid, world: &World, a: [f64; 2], b: [f64; 2]) -> bool {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let steps = (len / SHORTCUT_STEP).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let (ix, iy) = match grid.cell_of(p) {
            Some(c) => c,
            None => return false,
        };
        let i = grid.idx(ix, iy);
        if grid.blocked[i] || grid.mult[i] != 1.0 {
            return false;
        }
        if world.nearest_obstacle_surface(p) < ROBOT_RADIUS + SHORTCUT_STEP {
            return false;
        }
    }
    true
}

/// Greedy shortcut smoothing: from each vertex, jump to the farthest later
/// vertex reachable over clean cells. Penalty regions and tight passages are
/// left on the grid path.
fn smooth(grid: &PlanGrid, world: &World, pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    if pts.len() <= 2 {
        return pts.to_vec();
    }
    let mut out = vec![pts[0]];
    let mut i = 0usize;
    while i + 1 < pts.len() {
        let mut j = pts.len() - 1;
        while j > i + 1 && !segment_clean(grid, world, pts[i], pts[j]) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    out
}

/// Plans an expert path from `start` to `goal` as a world-frame polyline.
/// The first vertex is exactly `start` and the last exactly `goal`.
pub fn plan_expert_path(
    world: &World,
    goal: [f64; 2],
    kind: Option<&TaskKind>,
    start: [f64; 2],
) -> Result<Vec<[f64; 2]>, PlanError> {
    let grid = build_plan_grid(world, kind);
    let sc = grid
        .cell_of(start)
        .ok_or(PlanError::StartOutOfBounds(start[0], start[1]))?;
    let gc = grid
        .cell_of(goal)
        .ok_or(PlanError::GoalOutOfBounds(goal[0], goal[1]))?;
    if grid.blocked[grid.idx(gc.0, gc.1)] {
        return Err(PlanError::GoalBlocked);
    }
    let cells = astar_cells(&grid, sc, gc).ok_or(PlanError::Unreachable)?;
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(cells.len() + 1);
    pts.push(start);
    // Skip the first and last cell centers; start and goal stand in for them.
    for &i in cells.iter().skip(1).take(cells.len().saturating_sub(2)) {
        pts.push(grid.center(i % grid.nx, i / grid.nx));
    }
    pts.push(goal);
    pts.dedup_by(|a, b| a == b);
    Ok(smooth(&grid, world, &pts))
}
