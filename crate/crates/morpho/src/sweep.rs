//! Parameter grid sweeps and nearest-simulation attribution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use diff2dist::graph::{AttributedGraph, Dataset};
use diff2dist::model::Model;
use diff2dist::spectral::Spectrum;

use crate::error::{MorphoError, Result};
use crate::extract::{extract_graphs, ExtractConfig};
use crate::mesh::Tessellation;
use crate::sim::{default_initial_tissue, simulate, SimulationConfig};

pub const SPRING_CONSTANTS: [f64; 4] = [0.1, 0.3, 1.0, 3.0];
pub const VERTEX_EXCLUSIONS: [f64; 3] = [0.1, 0.3, 0.6];
pub const R_DIVS: [f64; 4] = [0.0, 1e-5, 3e-5, 1e-4];
pub const R_ANGLES: [f64; 6] = [0.0, 0.01, 0.03, 0.1, 0.5, 1.0];
pub const PARAMETER_NAMES: [&str; 4] = ["spring_constant", "vertex_exclusion", "r_div", "r_angle"];
pub const DEFAULT_ATTRIBUTION_K: usize = 100;

/// Every combination of the four grid axes, last axis fastest, all sharing
/// `base` for the remaining fields. Config `i` gets seed `base.seed + i`.
pub fn parameter_grid(base: &SimulationConfig) -> Vec<SimulationConfig> {
    let mut out = Vec::with_capacity(288);
    for &k in &SPRING_CONSTANTS {
        for &ve in &VERTEX_EXCLUSIONS {
            for &rd in &R_DIVS {
                for &ra in &R_ANGLES {
                    out.push(SimulationConfig {
                        spring_constant: k,
                        vertex_exclusion: ve,
                        r_div: rd,
                        r_angle: ra,
                        seed: base.seed.wrapping_add(out.len() as u64),
                        ..base.clone()
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub id: usize,
    pub config: SimulationConfig,
    pub graphs: Vec<AttributedGraph>,
    pub tessellation: Tessellation,
    pub divisions: usize,
}

/// Simulates every config from its own seeded initial tissue and extracts
/// its graphs. Runs concurrently; output order follows `configs`.
pub fn run_sweep(configs: &[SimulationConfig], extract: &ExtractConfig) -> Result<Vec<SweepRun>> {
    configs
        .par_iter()
        .enumerate()
        .map(|(id, cfg)| {
            let init = default_initial_tissue(cfg.seed)?;
            let out = simulate(cfg, &init)?;
            let graphs = extract_graphs(&out.tessellation, extract, 0, &format!("sim{id:03}"))?;
            Ok(SweepRun {
                id,
                config: cfg.clone(),
                graphs,
                divisions: out.divisions.len(),
                tessellation: out.tessellation,
            })
        })
        .collect()
}

/// Manifest rows: `config_id,spring_constant,vertex_exclusion,r_div,r_angle,seed,output`.
pub fn manifest_csv(runs: &[(usize, SimulationConfig, String)]) -> String {
    let mut out = String::from("config_id,spring_constant,vertex_exclusion,r_div,r_angle,seed,output\n");
    for (id, c, path) in runs {
        out.push_str(&format!(
            "{id},{},{},{},{},{},{path}\n",
            c.spring_constant, c.vertex_exclusion, c.r_div, c.r_angle, c.seed
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub graph_id: String,
    /// Mean `[spring_constant, vertex_exclusion, r_div, r_angle]`.
    pub parameters: [f64; 4],
    /// Indices into the flattened simulation graph list, nearest first.
    pub neighbors: Vec<usize>,
}

pub fn attribution_csv(rows: &[Attribution]) -> String {
    let mut out = String::from("graph_id,spring_constant,vertex_exclusion,r_div,r_angle\n");
    for r in rows {
        let p = r.parameters;
        out.push_str(&format!("{},{:.9e},{:.9e},{:.9e},{:.9e}\n", r.graph_id, p[0], p[1], p[2], p[3]));
    }
    out
}

/// For each graph of `bio`, the mean parameters of the `k` simulation
/// graphs nearest under `model`. Distance ties go to the earlier simulation
/// graph in flattened order.
pub fn attribute_parameters(
    bio: &Dataset,
    sims: &[(SimulationConfig, Vec<AttributedGraph>)],
    model: &Model,
    k: usize,
) -> Result<Vec<Attribution>> {
    if k == 0 {
        return Err(MorphoError::Config("k must be positive".into()));
    }
    let flat: Vec<(&AttributedGraph, [f64; 4])> = sims
        .iter()
        .flat_map(|(cfg, gs)| gs.iter().map(move |g| (g, cfg.parameters())))
        .collect();
    if flat.is_empty() {
        return Err(MorphoError::Config("no simulation graphs".into()));
    }
    let k = if flat.len() < k {
        log::warn!("only {} simulation graphs; using all of them instead of {k}", flat.len());
        flat.len()
    } else {
        k
    };
    let sim_spectra: Vec<Spectrum> = flat
        .par_iter()
        .map(|(g, _)| model.spectrum(g))
        .collect::<diff2dist::Result<_>>()?;
    let bio_spectra = model.spectra(bio.graphs())?;
    let ids = bio.graph_ids();
    bio_spectra
        .par_iter()
        .zip(ids.par_iter())
        .map(|(s, id)| {
            let d: Vec<f64> = sim_spectra
                .iter()
                .map(|t| model.pair_distance(s, t))
                .collect::<diff2dist::Result<_>>()?;
            let mut order: Vec<usize> = (0..flat.len()).collect();
            order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
            order.truncate(k);
            // Running mean, exact when all neighbours share a value.
            let mut parameters = [0.0; 4];
            for (seen, &i) in order.iter().enumerate() {
                for (p, x) in parameters.iter_mut().zip(flat[i].1) {
                    *p += (x - *p) / (seen + 1) as f64;
                }
            }
            Ok(Attribution {
                graph_id: id.clone(),
                parameters,
                neighbors: order,
            })
        })
        .collect()
}
