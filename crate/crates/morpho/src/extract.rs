//! Cell-neighbourhood graphs from a tessellation.

use serde::{Deserialize, Serialize};

use diff2dist::graph::{normalize_angle, AttributedGraph, Edge};

use crate::error::Result;
use crate::mesh::{dist, Tessellation};

/// Shared-boundary threshold as a fraction of the mean cell diameter.
pub const BOUNDARY_MIN_FRACTION: f64 = 0.2;
/// Central region radius as a fraction of the largest centroid distance
/// from the tissue center.
pub const CENTRAL_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    /// Nodes per graph, the center cell included.
    pub neighborhood: usize,
    /// Minimum shared wall length for an edge. Defaults to
    /// [`BOUNDARY_MIN_FRACTION`] of the mean cell diameter.
    pub boundary_min: Option<f64>,
    /// Defaults to [`CENTRAL_FRACTION`] of the tissue radius.
    pub central_radius: Option<f64>,
    /// Caps the number of graphs; centers are then spread evenly over the
    /// eligible cells ordered by distance from the tissue center.
    pub max_graphs: Option<usize>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            neighborhood: 64,
            boundary_min: None,
            central_radius: None,
            max_graphs: None,
        }
    }
}

fn by_distance(centroids: &[[f64; 2]], from: [f64; 2], pool: &[usize]) -> Vec<usize> {
    let mut order = pool.to_vec();
    order.sort_by(|&a, &b| {
        dist(centroids[a], from)
            .total_cmp(&dist(centroids[b], from))
            .then(a.cmp(&b))
    });
    order
}

/// Cells whose centroid lies within the central region, nearest first.
pub fn central_cells(t: &Tessellation, central_radius: Option<f64>) -> Vec<usize> {
    let centroids = t.centroids();
    let center = t.center();
    let radius = central_radius.unwrap_or_else(|| {
        CENTRAL_FRACTION * centroids.iter().map(|c| dist(*c, center)).fold(0.0, f64::max)
    });
    let all: Vec<usize> = (0..t.num_cells()).collect();
    by_distance(&centroids, center, &all)
        .into_iter()
        .filter(|&c| dist(centroids[c], center) <= radius)
        .collect()
}

/// One graph per selected center cell: the cell and its nearest central
/// neighbours by centroid distance, joined where they share enough wall.
/// Attributes are shared wall length, centroid angle from horizontal and
/// centroid distance; node positions are centroids.
pub fn extract_graphs(t: &Tessellation, cfg: &ExtractConfig, label: u32, source: &str) -> Result<Vec<AttributedGraph>> {
    let pool = central_cells(t, cfg.central_radius);
    if pool.len() < cfg.neighborhood || cfg.neighborhood == 0 {
        log::warn!(
            "{source}: only {} central cells for neighborhoods of {}; no graphs extracted",
            pool.len(),
            cfg.neighborhood
        );
        return Ok(Vec::new());
    }
    let boundary_min = cfg
        .boundary_min
        .unwrap_or_else(|| BOUNDARY_MIN_FRACTION * t.mean_cell_diameter());
    let centroids = t.centroids();
    let shared = t.shared_boundaries();
    let centers: Vec<usize> = match cfg.max_graphs {
        Some(k) if k < pool.len() => (0..k).map(|i| pool[i * pool.len() / k]).collect(),
        _ => pool.clone(),
    };
    let mut out = Vec::with_capacity(centers.len());
    for &c in &centers {
        let nodes: Vec<usize> = by_distance(&centroids, centroids[c], &pool)
            .into_iter()
            .take(cfg.neighborhood)
            .collect();
        let mut edges = Vec::new();
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                let (a, b) = (nodes[i], nodes[j]);
                let Some(&len) = shared.get(&(a.min(b), a.max(b))) else {
                    continue;
                };
                if len < boundary_min {
                    continue;
                }
                let (p, q) = (centroids[a], centroids[b]);
                let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
                edges.push(Edge {
                    i,
                    j,
                    attr: [len, normalize_angle(dy.atan2(dx)), dx.hypot(dy)],
                });
            }
        }
        let positions = nodes.iter().map(|&v| centroids[v]).collect();
        out.push(AttributedGraph::new(positions, edges, label, format!("{source}/cell{c}"))?);
    }
    Ok(out)
}
