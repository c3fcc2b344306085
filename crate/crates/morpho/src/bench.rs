//! Labelled synthetic datasets built from simulations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use diff2dist::graph::{AttributedGraph, Dataset, Edge, ATTR_BOUNDARY};

use crate::error::{MorphoError, Result};
use crate::extract::{extract_graphs, ExtractConfig};
use crate::sim::{initial_tissue, simulate, SimulationConfig, DEFAULT_INITIAL_RINGS};

/// Two simulated classes that differ only in `r_angle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoClassConfig {
    /// `r_angle` of class 0 and class 1.
    pub r_angles: [f64; 2],
    pub graphs_per_class: usize,
    pub nodes: usize,
    pub simulations_per_class: usize,
    /// Rings of the initial hexagonal patch.
    pub initial_rings: usize,
    /// Shared by both classes; `r_angle` and `seed` are overridden.
    pub simulation: SimulationConfig,
    pub boundary_min: Option<f64>,
    pub central_radius: Option<f64>,
    pub seed: u64,
}

impl Default for TwoClassConfig {
    fn default() -> Self {
        Self {
            r_angles: [0.01, 0.5],
            graphs_per_class: 100,
            nodes: 16,
            simulations_per_class: 3,
            initial_rings: DEFAULT_INITIAL_RINGS,
            simulation: SimulationConfig {
                steps: 1000,
                max_cells: 400,
                r_div: 1e-5,
                ..SimulationConfig::default()
            },
            boundary_min: None,
            central_radius: None,
            seed: 0,
        }
    }
}

impl TwoClassConfig {
    fn validate(&self) -> Result<()> {
        if self.graphs_per_class == 0 || self.simulations_per_class == 0 || self.nodes == 0 {
            return Err(MorphoError::Config("class sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Graphs of one class, spread as evenly as possible over its simulations.
fn class_graphs(cfg: &TwoClassConfig, label: u32) -> Result<Vec<AttributedGraph>> {
    let s = cfg.simulations_per_class;
    let jobs: Vec<(usize, usize)> = (0..s)
        .map(|i| (i, cfg.graphs_per_class / s + usize::from(i < cfg.graphs_per_class % s)))
        .collect();
    let per_sim: Vec<Vec<AttributedGraph>> = jobs
        .par_iter()
        .map(|&(i, want)| {
            let seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(label as u64 * 1000 + i as u64);
            let sim = SimulationConfig {
                r_angle: cfg.r_angles[label as usize],
                seed,
                ..cfg.simulation.clone()
            };
            let out = simulate(&sim, &initial_tissue(cfg.initial_rings, seed)?)?;
            let ex = ExtractConfig {
                neighborhood: cfg.nodes,
                boundary_min: cfg.boundary_min,
                central_radius: cfg.central_radius,
                max_graphs: Some(want),
            };
            let gs = extract_graphs(&out.tessellation, &ex, label, &format!("c{label}s{i}"))?;
            if gs.len() < want {
                return Err(MorphoError::Config(format!(
                    "simulation {i} of class {label} yielded {} graphs, {want} needed",
                    gs.len()
                )));
            }
            Ok(gs)
        })
        .collect::<Result<_>>()?;
    Ok(per_sim.into_iter().flatten().collect())
}

/// Class 0 uses `r_angles[0]`, class 1 `r_angles[1]`.
pub fn two_class_benchmark(cfg: &TwoClassConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut graphs = class_graphs(cfg, 0)?;
    graphs.extend(class_graphs(cfg, 1)?);
    Ok(Dataset::new(graphs)?)
}

/// Pairs of graphs with identical topology and node positions whose
/// classes differ only in the shared-boundary channel: class 1 copies have
/// every boundary length multiplied by `boundary_factor`.
pub fn attribute_only_benchmark(cfg: &TwoClassConfig, boundary_factor: f64) -> Result<Dataset> {
    cfg.validate()?;
    if !(boundary_factor > 0.0) || boundary_factor == 1.0 {
        return Err(MorphoError::Config("boundary factor must be positive and differ from 1".into()));
    }
    let base = class_graphs(cfg, 0)?;
    let mut graphs = Vec::with_capacity(2 * base.len());
    for g in &base {
        let edges = g
            .edges()
            .iter()
            .map(|e| {
                let mut attr = e.attr;
                attr[ATTR_BOUNDARY] *= boundary_factor;
                Edge { attr, ..*e }
            })
            .collect();
        let twin = AttributedGraph::new(g.positions().to_vec(), edges, 1, format!("{}/scaled", g.source_id))?;
        graphs.push(g.clone());
        graphs.push(twin);
    }
    Ok(Dataset::new(graphs)?)
}
