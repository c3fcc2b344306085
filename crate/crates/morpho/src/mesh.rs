//! Planar polygonal tessellations.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MorphoError, Result};

/// Undirected wall key with `a < b`.
pub(crate) fn wall_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

pub(crate) fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Shoelace signed area, positive for counterclockwise order.
pub fn polygon_area(pts: &[[f64; 2]]) -> f64 {
    let m = pts.len();
    let mut s = 0.0;
    for i in 0..m {
        let (p, q) = (pts[i], pts[(i + 1) % m]);
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s
}

pub fn polygon_centroid(pts: &[[f64; 2]]) -> [f64; 2] {
    let m = pts.len();
    let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
    for i in 0..m {
        let (p, q) = (pts[i], pts[(i + 1) % m]);
        let c = p[0] * q[1] - q[0] * p[1];
        a2 += c;
        cx += (p[0] + q[0]) * c;
        cy += (p[1] + q[1]) * c;
    }
    [cx / (3.0 * a2), cy / (3.0 * a2)]
}

/// Cells as counterclockwise vertex cycles over a shared vertex list, with
/// a rest length per wall segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Tessellation {
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<Vec<usize>>,
    pub(crate) rest: BTreeMap<(usize, usize), f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WallRecord {
    pub a: usize,
    pub b: usize,
    pub rest_length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeshFile {
    vertices: Vec<[f64; 2]>,
    walls: Vec<WallRecord>,
    cells: Vec<Vec<usize>>,
}

impl Tessellation {
    /// Validates the cells and takes current wall lengths as rest lengths.
    pub fn new(vertices: Vec<[f64; 2]>, cells: Vec<Vec<usize>>) -> Result<Self> {
        let mut t = Self {
            vertices,
            cells,
            rest: BTreeMap::new(),
        };
        t.validate_topology()?;
        for (a, b) in t.wall_keys() {
            let l = dist(t.vertices[a], t.vertices[b]);
            t.rest.insert((a, b), l);
        }
        Ok(t)
    }

    fn validate_topology(&self) -> Result<()> {
        if self.vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(MorphoError::Mesh("non-finite vertex".into()));
        }
        let mut directed = std::collections::BTreeSet::new();
        let mut undirected: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (c, cyc) in self.cells.iter().enumerate() {
            if cyc.len() < 3 {
                return Err(MorphoError::Mesh(format!("cell {c} has fewer than 3 vertices")));
            }
            if let Some(&v) = cyc.iter().find(|&&v| v >= self.vertices.len()) {
                return Err(MorphoError::Mesh(format!("cell {c} references missing vertex {v}")));
            }
            for k in 0..cyc.len() {
                let (a, b) = (cyc[k], cyc[(k + 1) % cyc.len()]);
                if a == b || !directed.insert((a, b)) {
                    return Err(MorphoError::Mesh(format!("cell {c} has a repeated or degenerate wall ({a}, {b})")));
                }
                let n = undirected.entry(wall_key(a, b)).or_default();
                *n += 1;
                if *n > 2 {
                    return Err(MorphoError::Mesh(format!("wall ({a}, {b}) borders more than two cells")));
                }
            }
            let area = self.cell_area(c);
            if !(area > 0.0) {
                return Err(MorphoError::Mesh(format!("cell {c} has non-positive area {area}")));
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_points(&self, c: usize) -> Vec<[f64; 2]> {
        self.cells[c].iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        polygon_area(&self.cell_points(c))
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 2] {
        polygon_centroid(&self.cell_points(c))
    }

    pub fn areas(&self) -> Vec<f64> {
        (0..self.cells.len()).map(|c| self.cell_area(c)).collect()
    }

    pub fn centroids(&self) -> Vec<[f64; 2]> {
        (0..self.cells.len()).map(|c| self.cell_centroid(c)).collect()
    }

    pub fn total_area(&self) -> f64 {
        self.areas().iter().sum()
    }

    /// Mean of `2 sqrt(A / pi)` over cells.
    pub fn mean_cell_diameter(&self) -> f64 {
        let areas = self.areas();
        areas.iter().map(|a| 2.0 * (a / std::f64::consts::PI).sqrt()).sum::<f64>() / areas.len() as f64
    }

    fn wall_keys(&self) -> Vec<(usize, usize)> {
        let mut keys: Vec<_> = self
            .cells
            .iter()
            .flat_map(|cyc| (0..cyc.len()).map(move |k| wall_key(cyc[k], cyc[(k + 1) % cyc.len()])))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    /// `(a, b, rest_length)` for every wall, ordered by key.
    pub fn walls(&self) -> Vec<(usize, usize, f64)> {
        self.rest.iter().map(|(&(a, b), &r)| (a, b, r)).collect()
    }

    pub fn rest_length(&self, a: usize, b: usize) -> Option<f64> {
        self.rest.get(&wall_key(a, b)).copied()
    }

    pub fn mean_rest_length(&self) -> f64 {
        self.rest.values().sum::<f64>() / self.rest.len() as f64
    }

    /// Cells on each side of every wall.
    pub fn wall_cells(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut out: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (c, cyc) in self.cells.iter().enumerate() {
            for k in 0..cyc.len() {
                out.entry(wall_key(cyc[k], cyc[(k + 1) % cyc.len()])).or_default().push(c);
            }
        }
        out
    }

    /// Vertices on a wall that borders only one cell.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut on = vec![false; self.vertices.len()];
        for ((a, b), cells) in self.wall_cells() {
            if cells.len() == 1 {
                on[a] = true;
                on[b] = true;
            }
        }
        on
    }

    /// Total shared wall length between each pair of adjacent cells, keyed
    /// with the smaller cell first.
    pub fn shared_boundaries(&self) -> BTreeMap<(usize, usize), f64> {
        let mut out = BTreeMap::new();
        for ((a, b), cells) in self.wall_cells() {
            if let [c, d] = cells[..] {
                *out.entry((c.min(d), c.max(d))).or_insert(0.0) += dist(self.vertices[a], self.vertices[b]);
            }
        }
        out
    }

    /// Mean of the cell centroids.
    pub fn center(&self) -> [f64; 2] {
        let cs = self.centroids();
        let m = cs.len() as f64;
        [cs.iter().map(|c| c[0]).sum::<f64>() / m, cs.iter().map(|c| c[1]).sum::<f64>() / m]
    }

    /// Hexagonal patch of `1 + 3 rings (rings + 1)` regular hexagons of the
    /// given area, centered at the origin.
    pub fn hex_patch(rings: usize, cell_area: f64) -> Result<Self> {
        if !(cell_area > 0.0) {
            return Err(MorphoError::Mesh("cell area must be positive".into()));
        }
        let side = (2.0 * cell_area / (3.0 * 3f64.sqrt())).sqrt();
        let r = rings as i64;
        let mut index: HashMap<(i64, i64), usize> = HashMap::new();
        let mut vertices = Vec::new();
        let mut cells = Vec::new();
        let key_of = |p: [f64; 2]| ((p[0] * 1e6).round() as i64, (p[1] * 1e6).round() as i64);
        for q in -r..=r {
            for s in (-r).max(-q - r)..=r.min(-q + r) {
                // flat-topped axial layout
                let cx = side * 1.5 * q as f64;
                let cy = side * 3f64.sqrt() * (s as f64 + q as f64 / 2.0);
                let mut cyc = Vec::with_capacity(6);
                for k in 0..6 {
                    let ang = std::f64::consts::PI / 3.0 * k as f64;
                    let p = [cx + side * ang.cos(), cy + side * ang.sin()];
                    let id = *index.entry(key_of(p)).or_insert_with(|| {
                        vertices.push(p);
                        vertices.len() - 1
                    });
                    cyc.push(id);
                }
                cells.push(cyc);
            }
        }
        Self::new(vertices, cells)
    }

    /// `nx` by `ny` grid of squares with the given side; cell `(i, j)` has
    /// index `j * nx + i` and lower-left corner `(i side, j side)`.
    pub fn square_grid(nx: usize, ny: usize, side: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || !(side > 0.0) {
            return Err(MorphoError::Mesh("empty or degenerate grid".into()));
        }
        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        let vertices = (0..=ny)
            .flat_map(|j| (0..=nx).map(move |i| [i as f64 * side, j as f64 * side]))
            .collect();
        let cells = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]))
            .collect();
        Self::new(vertices, cells)
    }

    /// Moves every vertex by a uniform random offset of at most
    /// `amount * mean_rest_length` per axis, then resets rest lengths.
    pub fn jittered(&self, amount: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = amount * self.mean_rest_length();
        let vertices = self
            .vertices
            .iter()
            .map(|p| {
                if scale > 0.0 {
                    [p[0] + rng.gen_range(-scale..=scale), p[1] + rng.gen_range(-scale..=scale)]
                } else {
                    *p
                }
            })
            .collect();
        Self::new(vertices, self.cells.clone())
    }

    pub fn to_json_string(&self) -> Result<String> {
        let f = MeshFile {
            vertices: self.vertices.clone(),
            walls: self
                .walls()
                .into_iter()
                .map(|(a, b, rest_length)| WallRecord { a, b, rest_length })
                .collect(),
            cells: self.cells.clone(),
        };
        Ok(serde_json::to_string(&f)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: MeshFile = serde_json::from_str(s)?;
        let mut t = Self::new(f.vertices, f.cells)?;
        for w in f.walls {
            let key = wall_key(w.a, w.b);
            match t.rest.get_mut(&key) {
                Some(r) if w.rest_length > 0.0 && w.rest_length.is_finite() => *r = w.rest_length,
                Some(_) => return Err(MorphoError::Mesh(format!("invalid rest length on wall {key:?}"))),
                None => return Err(MorphoError::Mesh(format!("wall {key:?} is not part of any cell"))),
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_patch_counts_and_areas() {
        let t = Tessellation::hex_patch(3, 25.0).unwrap();
        assert_eq!(t.num_cells(), 37);
        for a in t.areas() {
            assert!((a - 25.0).abs() < 1e-9);
        }
        // interior walls are shared by two cells, boundary walls by one
        let wc = t.wall_cells();
        let boundary = wc.values().filter(|c| c.len() == 1).count();
        assert_eq!(boundary, 12 * 3 + 6);
        assert!(t.center()[0].abs() < 1e-9 && t.center()[1].abs() < 1e-9);
    }

    #[test]
    fn square_grid_shared_boundaries() {
        let t = Tessellation::square_grid(3, 2, 2.0).unwrap();
        let sb = t.shared_boundaries();
        assert_eq!(sb.len(), 2 * 2 + 3);
        assert!(sb.values().all(|&l| (l - 2.0).abs() < 1e-12));
        assert!(sb.contains_key(&(0, 3)) && !sb.contains_key(&(0, 4)));
        assert!((t.mean_cell_diameter() - 2.0 * (4.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn invalid_meshes_are_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(Tessellation::new(v.clone(), vec![vec![0, 2, 1]]).is_err());
        assert!(Tessellation::new(v.clone(), vec![vec![0, 1]]).is_err());
        assert!(Tessellation::new(v.clone(), vec![vec![0, 1, 5]]).is_err());
        assert!(Tessellation::new(v, vec![vec![0, 1, 2], vec![0, 1, 2]]).is_err());
    }

    #[test]
    fn json_round_trip_keeps_rest_lengths() {
        let mut t = Tessellation::hex_patch(1, 10.0).unwrap();
        let key = *t.rest.keys().next().unwrap();
        t.rest.insert(key, 0.75);
        let back = Tessellation::from_json_str(&t.to_json_string().unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(Tessellation::from_json_str("{\"vertices\": []}").is_err());
    }

    #[test]
    fn centroid_of_square() {
        let c = polygon_centroid(&[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
        assert_eq!(c, [1.0, 1.0]);
    }
}
