//! Simplified growth and division of a polygonal tissue.
//!
//! Every step scales the tissue uniformly, divides cells that crossed the
//! area thresholds, and relaxes the vertices around each new wall with
//! damped spring steps. Boundary vertices stay pinned during relaxation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MorphoError, Result};
use crate::mesh::{dist, polygon_area, polygon_centroid, wall_key, Tessellation};

pub const DIVIDE_AREA: f64 = 40.0;
pub const RANDOM_DIVIDE_AREA: f64 = 20.0;
/// Cell area of the default initial patch, in the same units.
pub const INITIAL_CELL_AREA: f64 = 25.0;
pub const MAX_DIVISION_ATTEMPTS: usize = 20;
pub const DEFAULT_INITIAL_RINGS: usize = 2;
const ANGLE_GRID: usize = 180;
/// Split pieces shorter than this fraction of their wall count as degenerate.
const MIN_WALL_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub spring_constant: f64,
    /// Fraction of a wall's length, split evenly between its two ends, in
    /// which new division vertices may not be placed.
    pub vertex_exclusion: f64,
    pub r_div: f64,
    pub r_angle: f64,
    pub steps: usize,
    pub seed: u64,
    /// Relative area growth per step.
    pub growth_rate: f64,
    pub divide_area: f64,
    pub random_divide_area: f64,
    /// Simulation stops once this many cells exist.
    pub max_cells: usize,
    pub area_stiffness: f64,
    pub relax_step: f64,
    pub relax_tol: f64,
    pub relax_max_iter: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            spring_constant: 1.0,
            vertex_exclusion: 0.3,
            r_div: 0.0,
            r_angle: 0.0,
            steps: 10_000,
            seed: 0,
            growth_rate: 0.01,
            divide_area: DIVIDE_AREA,
            random_divide_area: RANDOM_DIVIDE_AREA,
            max_cells: 400,
            area_stiffness: 1.0,
            relax_step: 0.05,
            relax_tol: 1e-4,
            relax_max_iter: 200,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(MorphoError::Config(format!("{name} must lie in [0, 1], got {x}")))
            }
        };
        prob("r_div", self.r_div)?;
        prob("r_angle", self.r_angle)?;
        if !(0.0..1.0).contains(&self.vertex_exclusion) {
            return Err(MorphoError::Config(format!(
                "vertex_exclusion must lie in [0, 1), got {}",
                self.vertex_exclusion
            )));
        }
        let positive = [
            ("spring_constant", self.spring_constant),
            ("divide_area", self.divide_area),
            ("relax_step", self.relax_step),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(MorphoError::Config(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.growth_rate >= 0.0 && self.area_stiffness >= 0.0 && self.random_divide_area >= 0.0) {
            return Err(MorphoError::Config("growth, area stiffness and thresholds must be nonnegative".into()));
        }
        Ok(())
    }

    /// `[spring_constant, vertex_exclusion, r_div, r_angle]`.
    pub fn parameters(&self) -> [f64; 4] {
        [self.spring_constant, self.vertex_exclusion, self.r_div, self.r_angle]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivisionEvent {
    pub step: usize,
    pub cell: usize,
    pub new_cell: usize,
    /// Orientation of the new wall in `[0, pi)`.
    pub angle: f64,
    pub random_orientation: bool,
    pub parent_area: f64,
    /// Child areas before relaxation.
    pub child_areas: [f64; 2],
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub tessellation: Tessellation,
    pub divisions: Vec<DivisionEvent>,
    pub skipped_divisions: usize,
    pub steps_run: usize,
}

/// Where a line through a cell's centroid leaves the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Chord {
    /// Cycle positions of the two crossed walls, `k1 < k2`.
    k1: usize,
    k2: usize,
    s1: f64,
    s2: f64,
    length: f64,
}

/// Chord of `pts` along direction `theta` through `c`, or `None` when the
/// line touches a vertex or `c` is not inside.
fn chord(pts: &[[f64; 2]], c: [f64; 2], theta: f64) -> Option<Chord> {
    let m = pts.len();
    let u = [theta.cos(), theta.sin()];
    let f: Vec<f64> = pts
        .iter()
        .map(|p| u[0] * (p[1] - c[1]) - u[1] * (p[0] - c[0]))
        .collect();
    let mut plus: Option<(f64, usize, f64)> = None;
    let mut minus: Option<(f64, usize, f64)> = None;
    let mut n_plus = 0;
    for k in 0..m {
        let (fa, fb) = (f[k], f[(k + 1) % m]);
        if fa == 0.0 {
            return None;
        }
        if (fa > 0.0) == (fb > 0.0) || fb == 0.0 {
            continue;
        }
        let s = fa / (fa - fb);
        let (p, q) = (pts[k], pts[(k + 1) % m]);
        let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
        let t = u[0] * (x[0] - c[0]) + u[1] * (x[1] - c[1]);
        if t > 0.0 {
            n_plus += 1;
            if plus.map_or(true, |b| t < b.0) {
                plus = Some((t, k, s));
            }
        } else if minus.map_or(true, |b| t > b.0) {
            minus = Some((t, k, s));
        }
    }
    let (plus, minus) = (plus?, minus?);
    if n_plus % 2 == 0 {
        return None;
    }
    let (a, b) = if plus.1 < minus.1 { (plus, minus) } else { (minus, plus) };
    Some(Chord {
        k1: a.1,
        k2: b.1,
        s1: a.2,
        s2: b.2,
        length: plus.0 - minus.0,
    })
}

fn chord_allowed(ch: &Chord, m: usize, exclusion: f64) -> bool {
    let adjacent = ch.k2 == ch.k1 || ch.k2 == ch.k1 + 1 || (ch.k1 == 0 && ch.k2 == m - 1);
    let lo = (0.5 * exclusion).max(MIN_WALL_FRACTION);
    let inside = |s: f64| s > lo && s < 1.0 - lo;
    !adjacent && inside(ch.s1) && inside(ch.s2) && ch.length > 0.0
}

/// Shortest allowed chord through the centroid, searched on an angle grid
/// and refined by golden section inside the best grid bracket.
fn shortest_chord(pts: &[[f64; 2]], c: [f64; 2], exclusion: f64) -> Option<(f64, Chord)> {
    let m = pts.len();
    let eval = |th: f64| chord(pts, c, th).filter(|ch| chord_allowed(ch, m, exclusion));
    let step = PI / ANGLE_GRID as f64;
    let mut best: Option<(f64, Chord)> = None;
    for j in 0..ANGLE_GRID {
        let th = j as f64 * step;
        if let Some(ch) = eval(th) {
            if best.map_or(true, |b| ch.length < b.1.length) {
                best = Some((th, ch));
            }
        }
    }
    let (th0, ch0) = best?;
    let (mut a, mut b) = (th0 - step, th0 + step);
    if eval(a).is_none() || eval(b).is_none() {
        return Some((th0.rem_euclid(PI), ch0));
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let len = |th: f64| eval(th).map_or(f64::INFINITY, |ch| ch.length);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (len(x1), len(x2));
    for _ in 0..40 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = len(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = len(x2);
        }
    }
    let th = 0.5 * (a + b);
    match eval(th) {
        Some(ch) if ch.length <= ch0.length => Some((th.rem_euclid(PI), ch)),
        _ => Some((th0.rem_euclid(PI), ch0)),
    }
}

struct Simulator<'a> {
    cfg: &'a SimulationConfig,
    t: Tessellation,
    rng: ChaCha8Rng,
    divisions: Vec<DivisionEvent>,
    skipped: usize,
    reverted: usize,
}

impl Simulator<'_> {
    fn grow(&mut self, origin: [f64; 2]) {
        let s = (1.0 + self.cfg.growth_rate).sqrt();
        for p in self.t.vertices.iter_mut() {
            p[0] = origin[0] + s * (p[0] - origin[0]);
            p[1] = origin[1] + s * (p[1] - origin[1]);
        }
        for r in self.t.rest.values_mut() {
            *r *= s;
        }
    }

    fn divide(&mut self, step: usize, c: usize) -> Result<()> {
        let pts = self.t.cell_points(c);
        let m = pts.len();
        let centroid = polygon_centroid(&pts);
        let parent_area = polygon_area(&pts);
        let random = self.cfg.r_angle > 0.0 && self.rng.gen::<f64>() < self.cfg.r_angle;
        let mut found = None;
        let mut attempts = 0;
        if random {
            while attempts < MAX_DIVISION_ATTEMPTS {
                attempts += 1;
                let th = self.rng.gen_range(0.0..PI);
                if let Some(ch) = chord(&pts, centroid, th).filter(|ch| chord_allowed(ch, m, self.cfg.vertex_exclusion)) {
                    found = Some((th, ch));
                    break;
                }
            }
        } else {
            attempts = 1;
            found = shortest_chord(&pts, centroid, self.cfg.vertex_exclusion);
        }
        let Some((angle, ch)) = found else {
            log::debug!("step {step}: no admissible division plane for cell {c}; division skipped");
            self.skipped += 1;
            return Ok(());
        };

        let cyc = self.t.cells[c].clone();
        let lerp = |k: usize, s: f64| {
            let (p, q) = (pts[k], pts[(k + 1) % m]);
            [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]
        };
        let mean_rest = self.t.mean_rest_length();
        let va = self.split_wall(cyc[ch.k1], cyc[(ch.k1 + 1) % m], lerp(ch.k1, ch.s1), ch.s1, c)?;
        let vb = self.split_wall(cyc[ch.k2], cyc[(ch.k2 + 1) % m], lerp(ch.k2, ch.s2), ch.s2, c)?;

        let mut first = vec![va];
        first.extend_from_slice(&cyc[ch.k1 + 1..=ch.k2]);
        first.push(vb);
        let mut second = vec![vb];
        second.extend((ch.k2 + 1..ch.k1 + 1 + m).map(|k| cyc[k % m]));
        second.push(va);
        let new_cell = self.t.cells.len();
        self.t.cells[c] = first;
        self.t.cells.push(second);
        self.t.rest.insert(wall_key(va, vb), mean_rest);
        let child_areas = [self.t.cell_area(c), self.t.cell_area(new_cell)];
        if child_areas.iter().any(|a| !(*a > 0.0)) {
            return Err(MorphoError::Mesh(format!("division of cell {c} produced a degenerate child")));
        }
        self.divisions.push(DivisionEvent {
            step,
            cell: c,
            new_cell,
            angle,
            random_orientation: random,
            parent_area,
            child_areas,
            attempts,
        });
        self.relax(&[c, new_cell]);
        Ok(())
    }

    /// Inserts a vertex at `p` on wall `a -> b` of cell `owner` and on the
    /// same wall of the cell across it.
    fn split_wall(&mut self, a: usize, b: usize, p: [f64; 2], s: f64, owner: usize) -> Result<usize> {
        let v = self.t.vertices.len();
        self.t.vertices.push(p);
        let rest = self
            .t
            .rest
            .remove(&wall_key(a, b))
            .ok_or_else(|| MorphoError::Mesh(format!("missing wall ({a}, {b})")))?;
        self.t.rest.insert(wall_key(a, v), rest * s);
        self.t.rest.insert(wall_key(v, b), rest * (1.0 - s));
        for (d, cyc) in self.t.cells.iter_mut().enumerate() {
            if d == owner {
                continue;
            }
            let m = cyc.len();
            if let Some(k) = (0..m).find(|&k| cyc[k] == b && cyc[(k + 1) % m] == a) {
                cyc.insert(k + 1, v);
                break;
            }
        }
        Ok(v)
    }

    /// Damped gradient steps on wall spring and area energy for the
    /// vertices near `cells`. Reverts if any nearby cell inverts.
    fn relax(&mut self, cells: &[usize]) {
        let cfg = self.cfg;
        let t = &self.t;
        let nv = t.vertices.len();
        let boundary = t.boundary_vertices();
        let mut near = vec![false; nv];
        for &c in cells {
            for &v in &t.cells[c] {
                near[v] = true;
            }
        }
        let local: Vec<usize> = (0..t.cells.len())
            .filter(|&d| t.cells[d].iter().any(|&v| near[v]))
            .collect();
        let mut movable = vec![false; nv];
        for &d in &local {
            for &v in &t.cells[d] {
                movable[v] = !boundary[v];
            }
        }
        let walls: Vec<(usize, usize, f64)> = t
            .rest
            .iter()
            .filter(|(&(a, b), _)| movable[a] || movable[b])
            .map(|(&(a, b), &r)| (a, b, r))
            .collect();
        let area_cells: Vec<usize> = (0..t.cells.len())
            .filter(|&d| t.cells[d].iter().any(|&v| movable[v]))
            .collect();
        let targets: Vec<f64> = area_cells.iter().map(|&d| t.cell_area(d)).collect();
        let saved = self.t.vertices.clone();
        let mut force = vec![[0.0; 2]; nv];
        for _ in 0..cfg.relax_max_iter {
            let pos = &self.t.vertices;
            for &(a, b, r) in &walls {
                let (p, q) = (pos[a], pos[b]);
                let l = dist(p, q);
                if l == 0.0 {
                    continue;
                }
                let f = cfg.spring_constant * (l - r) / l;
                let d = [f * (q[0] - p[0]), f * (q[1] - p[1])];
                force[a][0] += d[0];
                force[a][1] += d[1];
                force[b][0] -= d[0];
                force[b][1] -= d[1];
            }
            if cfg.area_stiffness > 0.0 {
                for (&d, &a0) in area_cells.iter().zip(&targets) {
                    let cyc = &self.t.cells[d];
                    let m = cyc.len();
                    let area = polygon_area(&self.t.cell_points(d));
                    let coef = cfg.area_stiffness * (area - a0) / a0;
                    for k in 0..m {
                        let (prev, next) = (pos[cyc[(k + m - 1) % m]], pos[cyc[(k + 1) % m]]);
                        let grad = [0.5 * (next[1] - prev[1]), 0.5 * (prev[0] - next[0])];
                        force[cyc[k]][0] -= coef * grad[0];
                        force[cyc[k]][1] -= coef * grad[1];
                    }
                }
            }
            let mut max_disp = 0.0f64;
            for v in 0..nv {
                if movable[v] {
                    let d = [cfg.relax_step * force[v][0], cfg.relax_step * force[v][1]];
                    self.t.vertices[v][0] += d[0];
                    self.t.vertices[v][1] += d[1];
                    max_disp = max_disp.max(d[0].hypot(d[1]));
                }
                force[v] = [0.0; 2];
            }
            if max_disp < cfg.relax_tol || !max_disp.is_finite() {
                break;
            }
        }
        let inverted = area_cells.iter().any(|&d| !(self.t.cell_area(d) > 0.0));
        if inverted {
            log::debug!("relaxation inverted a cell; vertex positions reverted");
            self.reverted += 1;
            self.t.vertices = saved;
        }
    }
}

/// Runs the simulation from `init`.
pub fn simulate(cfg: &SimulationConfig, init: &Tessellation) -> Result<SimulationResult> {
    cfg.validate()?;
    let mut sim = Simulator {
        cfg,
        t: init.clone(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        divisions: Vec::new(),
        skipped: 0,
        reverted: 0,
    };
    let origin = init.center();
    let mut steps_run = 0;
    for step in 0..cfg.steps {
        if sim.t.num_cells() >= cfg.max_cells {
            break;
        }
        steps_run += 1;
        if cfg.growth_rate > 0.0 {
            sim.grow(origin);
        }
        let n = sim.t.num_cells();
        for c in 0..n {
            if sim.t.num_cells() >= cfg.max_cells {
                break;
            }
            let area = sim.t.cell_area(c);
            let divide = if area >= cfg.divide_area {
                true
            } else if area >= cfg.random_divide_area && cfg.r_div > 0.0 {
                sim.rng.gen::<f64>() < cfg.r_div
            } else {
                false
            };
            if divide {
                sim.divide(step, c)?;
            }
        }
    }
    if sim.skipped > 0 {
        log::warn!("seed {}: {} divisions skipped for lack of an admissible plane", cfg.seed, sim.skipped);
    }
    if sim.reverted > 0 {
        log::warn!("seed {}: {} relaxations reverted after inverting a cell", cfg.seed, sim.reverted);
    }
    Ok(SimulationResult {
        tessellation: sim.t,
        divisions: sim.divisions,
        skipped_divisions: sim.skipped,
        steps_run,
    })
}

/// Default initial tissue: a jittered hexagonal patch of 19 cells with
/// mean area [`INITIAL_CELL_AREA`].
pub fn default_initial_tissue(seed: u64) -> Result<Tessellation> {
    initial_tissue(DEFAULT_INITIAL_RINGS, seed)
}

/// Jittered hexagonal patch with `rings` rings around a center cell.
pub fn initial_tissue(rings: usize, seed: u64) -> Result<Tessellation> {
    Tessellation::hex_patch(rings, INITIAL_CELL_AREA)?.jittered(0.12, seed ^ 0x9e37_79b9_7f4a_7c15)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(side: f64) -> Vec<[f64; 2]> {
        vec![[0.0, 0.0], [side, 0.0], [side, side], [0.0, side]]
    }

    #[test]
    fn chord_of_square() {
        let pts = square(2.0);
        let ch = chord(&pts, [1.0, 1.0], 0.0).unwrap();
        assert_eq!((ch.k1, ch.k2), (1, 3));
        assert!((ch.length - 2.0).abs() < 1e-12);
        assert!((ch.s1 - 0.5).abs() < 1e-12 && (ch.s2 - 0.5).abs() < 1e-12);
        // diagonal hits corners
        assert!(chord(&pts, [1.0, 1.0], PI / 4.0).map_or(true, |ch| !chord_allowed(&ch, 4, 0.0)));
        // outside point
        assert!(chord(&pts, [3.0, 1.0], 0.3).is_none());
    }

    #[test]
    fn shortest_chord_of_rectangle_is_across_the_short_side() {
        let pts = vec![[0.0, 0.0], [4.0, 0.0], [4.0, 1.0], [0.0, 1.0]];
        let (th, ch) = shortest_chord(&pts, [2.0, 0.5], 0.3).unwrap();
        assert!((th - PI / 2.0).abs() < 1e-6);
        assert!((ch.length - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exclusion_rejects_chords_near_vertices() {
        let pts = square(2.0);
        let ch = chord(&pts, [1.0, 1.0], 0.7).unwrap();
        assert!(chord_allowed(&ch, 4, 0.0));
        let s_min = ch.s1.min(ch.s2).min(1.0 - ch.s1.max(ch.s2));
        assert!(!chord_allowed(&ch, 4, 2.0 * s_min + 1e-3));
    }

    #[test]
    fn no_trigger_leaves_tissue_unchanged() {
        let init = Tessellation::hex_patch(2, 15.0).unwrap().jittered(0.1, 3).unwrap();
        let cfg = SimulationConfig {
            growth_rate: 0.0,
            r_div: 0.0,
            r_angle: 0.5,
            steps: 50,
            ..SimulationConfig::default()
        };
        let out = simulate(&cfg, &init).unwrap();
        assert_eq!(out.tessellation, init);
        assert!(out.divisions.is_empty());
    }

    #[test]
    fn division_partitions_parent_area() {
        let init = default_initial_tissue(1).unwrap();
        let cfg = SimulationConfig {
            steps: 150,
            r_angle: 0.3,
            ..SimulationConfig::default()
        };
        let out = simulate(&cfg, &init).unwrap();
        assert!(!out.divisions.is_empty());
        for d in &out.divisions {
            let sum = d.child_areas[0] + d.child_areas[1];
            assert!((sum - d.parent_area).abs() <= 1e-9 * d.parent_area);
            assert!((0.0..PI).contains(&d.angle));
        }
    }

    #[test]
    fn config_validation() {
        assert!(SimulationConfig::default().validate().is_ok());
        assert!(SimulationConfig { r_div: 1.5, ..Default::default() }.validate().is_err());
        assert!(SimulationConfig { vertex_exclusion: 1.0, ..Default::default() }.validate().is_err());
        assert!(SimulationConfig { spring_constant: 0.0, ..Default::default() }.validate().is_err());
    }
}
