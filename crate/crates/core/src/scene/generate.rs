//! Synthetic rooms: a floor, four walls and primitive-shaped objects, sampled as noisy
//! surface points with per-class colors.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, Rng};

use super::PointCloud;

pub const FLOOR: i32 = 0;
pub const WALL: i32 = 1;
pub const FURNITURE: i32 = 2;
pub const COLUMN: i32 = 3;
pub const CLUTTER: i32 = 4;
pub const TABLE: i32 = 5;
pub const DOOR: i32 = 6;
pub const NUM_CLASSES: usize = 7;

pub const CLASS_NAMES: [&str; NUM_CLASSES] =
    ["floor", "wall", "furniture", "column", "clutter", "table", "door"];

/// Classes that form countable objects (the others are background surfaces).
pub fn is_thing(class: i32) -> bool {
    class >= FURNITURE
}

// Several classes share close base colors so that color alone does not separate them.
const BASE_COLORS: [[f64; 3]; NUM_CLASSES] = [
    [0.55, 0.47, 0.38], // floor
    [0.78, 0.77, 0.72], // wall
    [0.52, 0.42, 0.34], // furniture
    [0.74, 0.74, 0.70], // column
    [0.50, 0.50, 0.50], // clutter (re-tinted per object)
    [0.56, 0.44, 0.35], // table
    [0.70, 0.68, 0.62], // door
];

/// Inclusive count range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: u32,
    pub max: u32,
}

impl CountRange {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub seed: u64,
    /// Lower bound of room width, depth, height (meters).
    pub extent_min: [f64; 3],
    /// Upper bound of room width, depth, height (meters).
    pub extent_max: [f64; 3],
    pub furniture: CountRange,
    pub columns: CountRange,
    pub clutter: CountRange,
    pub tables: CountRange,
    pub doors: CountRange,
    /// Surface points per square meter.
    pub density: f64,
    /// Gaussian position noise (meters).
    pub noise_sigma: f64,
    /// Per-object color offset sigma.
    pub object_color_sigma: f64,
    /// Per-point color sigma.
    pub point_color_sigma: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            extent_min: [2.4, 2.4, 1.6],
            extent_max: [3.2, 3.2, 1.8],
            furniture: CountRange::new(1, 2),
            columns: CountRange::new(0, 1),
            clutter: CountRange::new(1, 3),
            tables: CountRange::new(1, 1),
            doors: CountRange::new(1, 1),
            density: 70.0,
            noise_sigma: 0.004,
            object_color_sigma: 0.05,
            point_color_sigma: 0.03,
        }
    }
}

impl SceneSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Spec with every object count range set to zero.
    pub fn empty_room(seed: u64) -> Self {
        let none = CountRange::new(0, 0);
        Self {
            seed,
            furniture: none,
            columns: none,
            clutter: none,
            tables: none,
            doors: none,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.extent_min[a] > 0.0) || !(self.extent_max[a] >= self.extent_min[a]) {
                return Err(Error::Spec(format!(
                    "room extent on axis {a} must satisfy 0 < min <= max, got [{}, {}]",
                    self.extent_min[a], self.extent_max[a]
                )));
            }
        }
        if self.extent_min[0] < 1.0 || self.extent_min[1] < 1.0 {
            return Err(Error::Spec("rooms must be at least 1 m wide and deep".into()));
        }
        if !(self.density > 0.0) {
            return Err(Error::Spec(format!("density must be positive, got {}", self.density)));
        }
        if !(self.noise_sigma >= 0.0 && self.object_color_sigma >= 0.0 && self.point_color_sigma >= 0.0) {
            return Err(Error::Spec("noise sigmas must be non-negative".into()));
        }
        for (name, r) in [
            ("furniture", self.furniture),
            ("columns", self.columns),
            ("clutter", self.clutter),
            ("tables", self.tables),
            ("doors", self.doors),
        ] {
            if r.min > r.max {
                return Err(Error::Spec(format!("{name} count range has min > max")));
            }
        }
        Ok(())
    }
}

struct Builder<'a> {
    spec: &'a SceneSpec,
    rng: Rng,
    cloud: PointCloud,
    next_instance: i32,
}

impl Builder<'_> {
    fn count(&mut self, area: f64) -> usize {
        let expected = area * self.spec.density;
        let base = expected.floor();
        let extra = if self.rng.random::<f64>() < expected - base { 1.0 } else { 0.0 };
        (base + extra) as usize
    }

    fn object_color(&mut self, class: i32) -> [f64; 3] {
        let base = if class == CLUTTER {
            // saturated but low-contrast tints
            let h: f64 = self.rng.random::<f64>();
            [
                0.5 + 0.15 * (h * std::f64::consts::TAU).cos(),
                0.5 + 0.15 * (h * std::f64::consts::TAU + 2.1).cos(),
                0.5 + 0.15 * (h * std::f64::consts::TAU + 4.2).cos(),
            ]
        } else {
            BASE_COLORS[class as usize]
        };
        let n = Normal::new(0.0, self.spec.object_color_sigma.max(1e-12)).expect("valid sigma");
        base.map(|c| c + n.sample(&mut self.rng))
    }

    fn emit(&mut self, p: [f64; 3], color: [f64; 3], class: i32, instance: i32) {
        let pn = Normal::new(0.0, self.spec.noise_sigma.max(1e-12)).expect("valid sigma");
        let cn = Normal::new(0.0, self.spec.point_color_sigma.max(1e-12)).expect("valid sigma");
        let pos = p.map(|v| v + pn.sample(&mut self.rng));
        // colors live on the 8-bit lattice so PLY storage is exact
        let col = color.map(|c| ((c + cn.sample(&mut self.rng)).clamp(0.0, 1.0) * 255.0).round() / 255.0);
        self.cloud.positions.push(pos);
        self.cloud.colors.push(col);
        self.cloud.labels.push(class);
        self.cloud.instance_ids.push(instance);
    }

    /// Uniform samples on the parallelogram `origin + s·u + t·v`.
    fn rect(&mut self, origin: [f64; 3], u: [f64; 3], v: [f64; 3], color: [f64; 3], class: i32, inst: i32) {
        let area = norm(cross(u, v));
        for _ in 0..self.count(area) {
            let s: f64 = self.rng.random();
            let t: f64 = self.rng.random();
            let p = [0, 1, 2].map(|a| origin[a] + s * u[a] + t * v[a]);
            self.emit(p, color, class, inst);
        }
    }

    /// Axis-aligned box surface from `lo` to `hi`; the bottom face is skipped when resting.
    fn boxed(&mut self, lo: [f64; 3], hi: [f64; 3], class: i32, with_bottom: bool) {
        let inst = self.new_instance();
        let color = self.object_color(class);
        let d = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let (ex, ey, ez) = ([d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]);
        self.rect([lo[0], lo[1], hi[2]], ex, ey, color, class, inst);
        if with_bottom {
            self.rect(lo, ex, ey, color, class, inst);
        }
        self.rect(lo, ex, ez, color, class, inst);
        self.rect([lo[0], hi[1], lo[2]], ex, ez, color, class, inst);
        self.rect(lo, ey, ez, color, class, inst);
        self.rect([hi[0], lo[1], lo[2]], ey, ez, color, class, inst);
    }

    fn cylinder(&mut self, center: [f64; 2], radius: f64, height: f64) {
        let inst = self.new_instance();
        let color = self.object_color(COLUMN);
        let side = std::f64::consts::TAU * radius * height;
        for _ in 0..self.count(side) {
            let a: f64 = self.rng.random::<f64>() * std::f64::consts::TAU;
            let z: f64 = self.rng.random::<f64>() * height;
            let p = [center[0] + radius * a.cos(), center[1] + radius * a.sin(), z];
            self.emit(p, color, COLUMN, inst);
        }
    }

    fn sphere(&mut self, center: [f64; 3], radius: f64) {
        let inst = self.new_instance();
        let color = self.object_color(CLUTTER);
        let area = 2.0 * std::f64::consts::TAU * radius * radius;
        for _ in 0..self.count(area) {
            let d: [f64; 3] = [0, 1, 2].map(|_| StandardNormal.sample(&mut self.rng));
            let n = norm(d).max(1e-12);
            let p = [0, 1, 2].map(|a| center[a] + radius * d[a] / n);
            self.emit(p, color, CLUTTER, inst);
        }
    }

    fn new_instance(&mut self) -> i32 {
        let i = self.next_instance;
        self.next_instance += 1;
        i
    }

    fn pick(&mut self, r: CountRange) -> u32 {
        self.rng.random_range(r.min..=r.max)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Axis-aligned footprint used to keep objects apart.
#[derive(Clone, Copy)]
struct Footprint {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Footprint {
    fn overlaps(&self, o: &Footprint, gap: f64) -> bool {
        self.lo[0] < o.hi[0] + gap
            && o.lo[0] < self.hi[0] + gap
            && self.lo[1] < o.hi[1] + gap
            && o.lo[1] < self.hi[1] + gap
    }
}

/// Generates one labeled room. Deterministic in `spec.seed`.
///
/// Instance ids: floor 0, walls 1–4, objects from 5 upward in creation order.
pub fn generate_scene(spec: &SceneSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut b = Builder {
        spec,
        rng: rng_for(spec.seed, "scene", 0),
        cloud: PointCloud {
            positions: Vec::new(),
            colors: Vec::new(),
            labels: Vec::new(),
            instance_ids: Vec::new(),
            scene_id: format!("scene_{:06}", spec.seed),
        },
        next_instance: 0,
    };
    let w = b.uniform(spec.extent_min[0], spec.extent_max[0]);
    let d = b.uniform(spec.extent_min[1], spec.extent_max[1]);
    let h = b.uniform(spec.extent_min[2], spec.extent_max[2]);

    let floor_inst = b.new_instance();
    let floor_color = b.object_color(FLOOR);
    b.rect([0.0; 3], [w, 0.0, 0.0], [0.0, d, 0.0], floor_color, FLOOR, floor_inst);
    let walls: [([f64; 3], [f64; 3]); 4] = [
        ([0.0, 0.0, 0.0], [w, 0.0, 0.0]),
        ([0.0, d, 0.0], [w, 0.0, 0.0]),
        ([0.0, 0.0, 0.0], [0.0, d, 0.0]),
        ([w, 0.0, 0.0], [0.0, d, 0.0]),
    ];
    for (origin, along) in walls {
        let inst = b.new_instance();
        let color = b.object_color(WALL);
        b.rect(origin, along, [0.0, 0.0, h], color, WALL, inst);
    }

    let mut taken: Vec<Footprint> = Vec::new();
    let margin = 0.15;
    // returns the lower corner of a free footprint of the given size, if one is found
    let place = |b: &mut Builder, sx: f64, sy: f64, taken: &mut Vec<Footprint>| -> Option<[f64; 2]> {
        for _ in 0..40 {
            let x = b.uniform(margin, (w - margin - sx).max(margin));
            let y = b.uniform(margin, (d - margin - sy).max(margin));
            let fp = Footprint {
                lo: [x, y],
                hi: [x + sx, y + sy],
            };
            if fp.hi[0] <= w - margin + 1e-9 && fp.hi[1] <= d - margin + 1e-9 && !taken.iter().any(|t| t.overlaps(&fp, 0.1)) {
                taken.push(fp);
                return Some([x, y]);
            }
        }
        None
    };

    for _ in 0..b.pick(spec.doors) {
        let width = b.uniform(0.7, 0.9);
        let height = (h - 0.1).min(b.uniform(1.4, 1.7));
        let side = b.rng.random_range(0..4);
        let along_len = if side < 2 { w } else { d };
        let start = b.uniform(0.2, (along_len - width - 0.2).max(0.2));
        let t = 0.06;
        let (lo, hi) = match side {
            0 => ([start, 0.02, 0.0], [start + width, 0.02 + t, height]),
            1 => ([start, d - 0.02 - t, 0.0], [start + width, d - 0.02, height]),
            2 => ([0.02, start, 0.0], [0.02 + t, start + width, height]),
            _ => ([w - 0.02 - t, start, 0.0], [w - 0.02, start + width, height]),
        };
        b.boxed(lo, hi, DOOR, false);
    }

    let mut table_tops: Vec<([f64; 3], [f64; 3])> = Vec::new();
    for _ in 0..b.pick(spec.tables) {
        let sx = b.uniform(0.8, 1.2);
        let sy = b.uniform(0.5, 0.8);
        if let Some([x, y]) = place(&mut b, sx, sy, &mut taken) {
            let top = b.uniform(0.65, 0.75);
            b.boxed([x, y, top - 0.05], [x + sx, y + sy, top], TABLE, true);
            table_tops.push(([x, y, top], [x + sx, y + sy, top]));
        }
    }
    for _ in 0..b.pick(spec.furniture) {
        let sx = b.uniform(0.4, 0.8);
        let sy = b.uniform(0.4, 0.8);
        if let Some([x, y]) = place(&mut b, sx, sy, &mut taken) {
            let top = b.uniform(0.4, 0.9);
            b.boxed([x, y, 0.0], [x + sx, y + sy, top], FURNITURE, false);
        }
    }
    for _ in 0..b.pick(spec.columns) {
        let r = b.uniform(0.12, 0.2);
        if let Some([x, y]) = place(&mut b, 2.0 * r, 2.0 * r, &mut taken) {
            b.cylinder([x + r, y + r], r, h);
        }
    }
    for _ in 0..b.pick(spec.clutter) {
        let r = b.uniform(0.12, 0.22);
        let on_table = !table_tops.is_empty() && b.rng.random::<f64>() < 0.5;
        if on_table {
            let ti = b.rng.random_range(0..table_tops.len());
            let (lo, hi) = table_tops[ti];
            let x = b.uniform(lo[0] + r, (hi[0] - r).max(lo[0] + r));
            let y = b.uniform(lo[1] + r, (hi[1] - r).max(lo[1] + r));
            b.sphere([x, y, lo[2] + r], r);
        } else if let Some([x, y]) = place(&mut b, 2.0 * r, 2.0 * r, &mut taken) {
            b.sphere([x + r, y + r, r], r);
        }
    }
    if b.cloud.is_empty() {
        return Err(Error::Spec("spec produced an empty scene".into()));
    }
    Ok(b.cloud)
}
