//! World model: terrain grid, cylindrical entities, state queries, and the
//! seeded world generator.

use super::{derive_seed, Pose2D, ROBOT_RADIUS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Terrain classes. Cell colors derive from these via `TerrainClass::base_color`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerrainClass {
    Sidewalk,
    Grass,
    Mud,
}

impl TerrainClass {
    pub const ALL: [TerrainClass; 3] = [
        TerrainClass::Sidewalk,
        TerrainClass::Grass,
        TerrainClass::Mud,
    ];

    pub fn base_color(self) -> [u8; 3] {
        match self {
            TerrainClass::Sidewalk => [168, 168, 172],
            TerrainClass::Grass => [62, 128, 70],
            TerrainClass::Mud => [112, 86, 58],
        }
    }

    /// Lowercase caption word for this terrain.
    pub fn word(self) -> &'static str {
        match self {
            TerrainClass::Sidewalk => "sidewalk",
            TerrainClass::Grass => "grass",
            TerrainClass::Mud => "mud",
        }
    }
}

/// Entity classes shared by obstacles and goal objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntityClass {
    Cone,
    Trashcan,
    Vest,
    Hose,
}

impl EntityClass {
    pub fn word(self) -> &'static str {
        match self {
            EntityClass::Cone => "cone",
            EntityClass::Trashcan => "trashcan",
            EntityClass::Vest => "vest",
            EntityClass::Hose => "hose",
        }
    }

    /// Nominal body height in meters; obstacles jitter around it.
    pub fn nominal_height(self) -> f64 {
        match self {
            EntityClass::Cone => 0.45,
            EntityClass::Trashcan => 0.68,
            EntityClass::Vest => 0.34,
            EntityClass::Hose => 0.14,
        }
    }
}

/// Nameable entity colors; render colors derive from these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorName {
    Red,
    Blue,
    Green,
    Yellow,
    Orange,
}

impl ColorName {
    pub fn word(self) -> &'static str {
        match self {
            ColorName::Red => "red",
            ColorName::Blue => "blue",
            ColorName::Green => "green",
            ColorName::Yellow => "yellow",
            ColorName::Orange => "orange",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            ColorName::Red => [205, 48, 43],
            ColorName::Blue => [44, 86, 214],
            ColorName::Green => [46, 176, 88],
            ColorName::Yellow => [232, 218, 52],
            ColorName::Orange => [238, 138, 36],
        }
    }
}

/// 0.5 m terrain cells covering [0, nx*cell) x [0, ny*cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainGrid {
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    pub classes: Vec<TerrainClass>,
    pub base_colors: Vec<[u8; 3]>,
}

impl TerrainGrid {
    pub fn uniform(nx: usize, ny: usize, cell_size: f64, class: TerrainClass) -> Self {
        TerrainGrid {
            cell_size,
            nx,
            ny,
            classes: vec![class; nx * ny],
            base_colors: vec![class.base_color(); nx * ny],
        }
    }

    pub fn cell_index(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let ix = (p[0] / self.cell_size).floor();
        let iy = (p[1] / self.cell_size).floor();
        if ix < 0.0 || iy < 0.0 || ix >= self.nx as f64 || iy >= self.ny as f64 {
            None
        } else {
            Some((ix as usize, iy as usize))
        }
    }

    pub fn class_at(&self, p: [f64; 2]) -> Option<TerrainClass> {
        self.cell_index(p).map(|(ix, iy)| self.classes[iy * self.nx + ix])
    }

    /// Class at `p`, clamping out-of-range points to the nearest cell.
    pub fn class_at_clamped(&self, p: [f64; 2]) -> TerrainClass {
        let ix = ((p[0] / self.cell_size).floor().max(0.0) as usize).min(self.nx - 1);
        let iy = ((p[1] / self.cell_size).floor().max(0.0) as usize).min(self.ny - 1);
        self.classes[iy * self.nx + ix]
    }

    pub fn set_class(&mut self, ix: usize, iy: usize, class: TerrainClass) {
        let i = iy * self.nx + ix;
        self.classes[i] = class;
        self.base_colors[i] = class.base_color();
    }

    /// Center of cell (ix, iy) in world coordinates.
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            (ix as f64 + 0.5) * self.cell_size,
            (iy as f64 + 0.5) * self.cell_size,
        ]
    }
}

/// A colliding cylinder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
    pub class: EntityClass,
    pub color: ColorName,
    pub height: f64,
}

/// A non-colliding goal entity. Height comes from the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalObject {
    pub center: [f64; 2],
    pub radius: f64,
    pub class: EntityClass,
    pub color: ColorName,
}

impl GoalObject {
    pub fn height(&self) -> f64 {
        self.class.nominal_height()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub seed: u64,
    /// World rectangle is [0, extent[0]] x [0, extent[1]].
    pub extent: [f64; 2],
    pub terrain: TerrainGrid,
    pub obstacles: Vec<Obstacle>,
    pub objects: Vec<GoalObject>,
}

/// Snapshot of robot/world interaction at one pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateInfo {
    pub collided: bool,
    pub out_of_bounds: bool,
    pub terrain: TerrainClass,
}

impl World {
    /// Collision, bounds, and terrain at the given pose. Collision tests the
    /// robot disc against obstacle cylinders; goal objects never collide.
    pub fn query_state(&self, pose: Pose2D) -> StateInfo {
        let p = pose.xy();
        let collided = self.obstacles.iter().any(|o| {
            let dx = p[0] - o.center[0];
            let dy = p[1] - o.center[1];
            dx * dx + dy * dy < (o.radius + ROBOT_RADIUS).powi(2)
        });
        let out_of_bounds =
            p[0] < 0.0 || p[1] < 0.0 || p[0] > self.extent[0] || p[1] > self.extent[1];
        StateInfo {
            collided,
            out_of_bounds,
            terrain: self.terrain.class_at_clamped(p),
        }
    }

    /// Distance from `p` to the nearest obstacle surface; infinity when there
    /// are no obstacles.
    pub fn nearest_obstacle_surface(&self, p: [f64; 2]) -> f64 {
        self.obstacles
            .iter()
            .map(|o| {
                let dx = p[0] - o.center[0];
                let dy = p[1] - o.center[1];
                (dx * dx + dy * dy).sqrt() - o.radius
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// True when a robot at `p` with extra clearance is inside the extent and
    /// collision-free.
    pub fn free_at(&self, p: [f64; 2], clearance: f64) -> bool {
        let margin = ROBOT_RADIUS + clearance;
        if p[0] < margin
            || p[1] < margin
            || p[0] > self.extent[0] - margin
            || p[1] > self.extent[1] - margin
        {
            return false;
        }
        self.nearest_obstacle_surface(p) > margin
    }

    /// All entity cylinders as (center, radius, height) for rendering and
    /// line-of-sight tests. Obstacles come first, then goal objects.
    pub fn cylinders(&self) -> impl Iterator<Item = ([f64; 2], f64, f64)> + '_ {
        self.obstacles
            .iter()
            .map(|o| (o.center, o.radius, o.height))
            .chain(self.objects.iter().map(|g| (g.center, g.radius, g.height())))
    }

    /// True when the straight segment from the 3D point `from` to the ground
    /// point `to` passes through some entity cylinder.
    pub fn segment_occluded(&self, from: [f64; 3], to: [f64; 2]) -> bool {
        let dir = [to[0] - from[0], to[1] - from[1], -from[2]];
        self.cylinders().any(|(c, r, h)| {
            ray_cylinder_hit(from, dir, c, r, h, 1e-6, 1.0 - 1e-6).is_some()
        })
    }
}

/// First ray parameter in (t_min, t_max) where origin + t*dir enters the
/// vertical cylinder (side surface or top cap), or None.
pub fn ray_cylinder_hit(
    origin: [f64; 3],
    dir: [f64; 3],
    center: [f64; 2],
    radius: f64,
    height: f64,
    t_min: f64,
    t_max: f64,
) -> Option<f64> {
    let ox = origin[0] - center[0];
    let oy = origin[1] - center[1];
    let a = dir[0] * dir[0] + dir[1] * dir[1];
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > t_min && t < t_max && best.map_or(true, |b| t < b) {
            best = Some(t);
        }
    };
    if a > 1e-18 {
        let b = 2.0 * (ox * dir[0] + oy * dir[1]);
        let c = ox * ox + oy * oy - radius * radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                let z = origin[2] + t * dir[2];
                if (0.0..=height).contains(&z) {
                    consider(t);
                }
            }
        }
    }
    // Top cap, for rays looking down onto short cylinders.
    if dir[2].abs() > 1e-18 {
        let t = (height - origin[2]) / dir[2];
        let x = ox + t * dir[0];
        let y = oy + t * dir[1];
        if x * x + y * y <= radius * radius {
            consider(t);
        }
    }
    best
}

/// Seeded world generator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldGenConfig {
    pub extent: [f64; 2],
    pub cell_size: f64,
    pub n_obstacles: [usize; 2],
    pub n_objects: [usize; 2],
    /// Draw entity classes/colors from the held-out palette.
    pub unseen_palette: bool,
    pub obstacle_radius: [f64; 2],
    pub object_radius: [f64; 2],
    pub with_sidewalk: bool,
    pub mud_blobs: [usize; 2],
}

impl Default for WorldGenConfig {
    fn default() -> Self {
        WorldGenConfig {
            extent: [12.0, 12.0],
            cell_size: 0.5,
            n_obstacles: [1, 4],
            n_objects: [1, 2],
            unseen_palette: false,
            obstacle_radius: [0.25, 0.42],
            object_radius: [0.22, 0.32],
            with_sidewalk: true,
            mud_blobs: [1, 2],
        }
    }
}

fn seen_colors() -> &'static [ColorName] {
    &[ColorName::Red, ColorName::Blue, ColorName::Green]
}
fn unseen_colors() -> &'static [ColorName] {
    &[ColorName::Yellow, ColorName::Orange]
}
fn seen_classes() -> &'static [EntityClass] {
    &[EntityClass::Cone, EntityClass::Trashcan]
}
fn unseen_classes() -> &'static [EntityClass] {
    &[EntityClass::Vest, EntityClass::Hose]
}

/// The (colors, classes) palette for a split.
pub fn palette(unseen: bool) -> (&'static [ColorName], &'static [EntityClass]) {
    if unseen {
        (unseen_colors(), unseen_classes())
    } else {
        (seen_colors(), seen_classes())
    }
}

/// Builds a world from a seed. Same seed and config always produce the same
/// world. Goal objects receive pairwise-distinct (color, class) descriptions
/// so captions are unambiguous.
pub fn gen_world(seed: u64, cfg: &WorldGenConfig) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "world", 0));
    let nx = (cfg.extent[0] / cfg.cell_size).round() as usize;
    let ny = (cfg.extent[1] / cfg.cell_size).round() as usize;
    let mut terrain = TerrainGrid::uniform(nx, ny, cfg.cell_size, TerrainClass::Grass);

    if cfg.with_sidewalk {
        let vertical = rng.gen_bool(0.5);
        let width = rng.gen_range(2..=3usize);
        let span = if vertical { nx } else { ny };
        let lo = rng.gen_range(3..span.saturating_sub(3 + width).max(4));
        for w in 0..width {
            for j in 0..(if vertical { ny } else { nx }) {
                if vertical {
                    terrain.set_class(lo + w, j, TerrainClass::Sidewalk);
                } else {
                    terrain.set_class(j, lo + w, TerrainClass::Sidewalk);
                }
            }
        }
    }
    let n_mud = rng.gen_range(cfg.mud_blobs[0]..=cfg.mud_blobs[1]);
    for _ in 0..n_mud {
        let wx = rng.gen_range(2..=4usize);
        let wy = rng.gen_range(2..=4usize);
        let x0 = rng.gen_range(1..nx.saturating_sub(wx + 1).max(2));
        let y0 = rng.gen_range(1..ny.saturating_sub(wy + 1).max(2));
        for iy in y0..y0 + wy {
            for ix in x0..x0 + wx {
                if terrain.classes[iy * nx + ix] == TerrainClass::Grass {
                    terrain.set_class(ix, iy, TerrainClass::Mud);
                }
            }
        }
    }

    let (colors, classes) = palette(cfg.unseen_palette);
    let mut world = World {
        seed,
        extent: cfg.extent,
        terrain,
        obstacles: Vec::new(),
        objects: Vec::new(),
    };

    let mut placed: Vec<([f64; 2], f64)> = Vec::new();
    let sample_center = |rng: &mut ChaCha8Rng, radius: f64, placed: &[([f64; 2], f64)]| {
        for _ in 0..200 {
            let p = [
                rng.gen_range(1.5..cfg.extent[0] - 1.5),
                rng.gen_range(1.5..cfg.extent[1] - 1.5),
            ];
            let ok = placed
                .iter()
                .all(|(q, r)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() > radius + r + 0.9);
            if ok {
                return Some(p);
            }
        }
        None
    };

    let n_obj = rng.gen_range(cfg.n_objects[0]..=cfg.n_objects[1]);
    let mut used_desc: Vec<(ColorName, EntityClass)> = Vec::new();
    for _ in 0..n_obj {
        let radius = rng.gen_range(cfg.object_radius[0]..cfg.object_radius[1]);
        let Some(center) = sample_center(&mut rng, radius, &placed) else {
            break;
        };
        // Distinct (color, class) per object; bounded resampling.
        let mut color = colors[rng.gen_range(0..colors.len())];
        let mut class = classes[rng.gen_range(0..classes.len())];
        for _ in 0..40 {
            if !used_desc.contains(&(color, class)) {
                break;
            }
            color = colors[rng.gen_range(0..colors.len())];
            class = classes[rng.gen_range(0..classes.len())];
        }
        if used_desc.contains(&(color, class)) {
            break; // palette exhausted
        }
        used_desc.push((color, class));
        placed.push((center, radius));
        world.objects.push(GoalObject {
            center,
            radius,
            class,
            color,
        });
    }

    let n_obs = rng.gen_range(cfg.n_obstacles[0]..=cfg.n_obstacles[1]);
    for _ in 0..n_obs {
        let radius = rng.gen_range(cfg.obstacle_radius[0]..cfg.obstacle_radius[1]);
        let Some(center) = sample_center(&mut rng, radius, &placed) else {
            break;
        };
        let class = classes[rng.gen_range(0..classes.len())];
        let color = colors[rng.gen_range(0..colors.len())];
        let height = class.nominal_height() * rng.gen_range(0.9..1.15);
        placed.push((center, radius));
        world.obstacles.push(Obstacle {
            center,
            radius,
            class,
            color,
            height,
        });
    }

    world
}
