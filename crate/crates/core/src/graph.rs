//! Attributed graphs, weighted Laplacians and the dataset container.
//!
//! Every graph in a [`Dataset`] has the same node count, which is what the
//! fixed-size diffusion distance requires. Edge attributes are the three
//! morphology measurements `[shared boundary length, angle from horizontal,
//! edge length]`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of each edge-attribute channel.
pub const ATTR_BOUNDARY: usize = 0;
pub const ATTR_ANGLE: usize = 1;
pub const ATTR_LENGTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub attr: [f64; 3],
}

/// Fold an undirected edge direction into `[-pi/2, pi/2)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(std::f64::consts::PI);
    if a >= FRAC_PI_2 {
        a -= std::f64::consts::PI;
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    positions: Vec<[f64; 2]>,
    edges: Vec<Edge>,
    pub label: u32,
    pub source_id: String,
}

impl AttributedGraph {
    /// Validates the edge list. Endpoints are stored with `i < j`.
    pub fn new(
        positions: Vec<[f64; 2]>,
        edges: Vec<Edge>,
        label: u32,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGraph("non-finite node position".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut stored = Vec::with_capacity(edges.len());
        for (k, mut e) in edges.into_iter().enumerate() {
            if e.i == e.j {
                return Err(Error::InvalidEdge {
                    edge: k,
                    reason: format!("self-loop on node {}", e.i),
                });
            }
            if e.i > e.j {
                std::mem::swap(&mut e.i, &mut e.j);
            }
            if e.j >= n {
                return Err(Error::InvalidEdge {
                    edge: k,
                    reason: format!("endpoint {} out of range for {n} nodes", e.j),
                });
            }
            if !seen.insert((e.i, e.j)) {
                return Err(Error::InvalidEdge {
                    edge: k,
                    reason: format!("duplicate edge ({}, {})", e.i, e.j),
                });
            }
            validate_attr(k, &e.attr)?;
            stored.push(e);
        }
        Ok(Self {
            positions,
            edges: stored,
            label,
            source_id: source_id.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Euclidean distance between the endpoints of edge `k`.
    pub fn edge_distance(&self, k: usize) -> f64 {
        let e = &self.edges[k];
        let (p, q) = (self.positions[e.i], self.positions[e.j]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    }

    /// Relabel nodes: node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: perm.len(),
            });
        }
        let mut positions = vec![[0.0; 2]; n];
        for (v, &p) in perm.iter().enumerate() {
            positions[p] = self.positions[v];
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                i: perm[e.i],
                j: perm[e.j],
                attr: e.attr,
            })
            .collect();
        Self::new(positions, edges, self.label, self.source_id.clone())
    }
}

fn validate_attr(edge: usize, attr: &[f64; 3]) -> Result<()> {
    if attr.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidEdge {
            edge,
            reason: format!("non-finite attribute {attr:?}"),
        });
    }
    if attr[ATTR_BOUNDARY] <= 0.0 || attr[ATTR_LENGTH] <= 0.0 {
        return Err(Error::InvalidEdge {
            edge,
            reason: format!("boundary and edge length must be positive, got {attr:?}"),
        });
    }
    if !(-FRAC_PI_2..FRAC_PI_2).contains(&attr[ATTR_ANGLE]) {
        return Err(Error::InvalidEdge {
            edge,
            reason: format!("angle {} outside [-pi/2, pi/2)", attr[ATTR_ANGLE]),
        });
    }
    Ok(())
}

/// Dense symmetric graph Laplacian `D - W`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLaplacian {
    matrix: DMatrix<f64>,
}

impl WeightedLaplacian {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Wrap an arbitrary matrix; symmetry is checked exactly.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        if matrix != matrix.transpose() {
            return Err(Error::InvalidGraph("Laplacian must be symmetric".into()));
        }
        Ok(Self { matrix })
    }
}

/// Assemble the Laplacian for nonnegative edge weights.
pub fn build_laplacian(g: &AttributedGraph, weights: &[f64]) -> Result<WeightedLaplacian> {
    assemble(g, weights, false)
}

/// Like [`build_laplacian`] but accepts negative (finite) weights. The result
/// is symmetric with zero row sums but need not be positive semidefinite.
pub fn build_signed_laplacian(g: &AttributedGraph, weights: &[f64]) -> Result<WeightedLaplacian> {
    assemble(g, weights, true)
}

fn assemble(g: &AttributedGraph, weights: &[f64], allow_negative: bool) -> Result<WeightedLaplacian> {
    if weights.len() != g.edges.len() {
        return Err(Error::DimensionMismatch {
            expected: g.edges.len(),
            actual: weights.len(),
        });
    }
    let n = g.n();
    let mut m = DMatrix::zeros(n, n);
    for (k, (e, &w)) in g.edges.iter().zip(weights).enumerate() {
        if !w.is_finite() || (!allow_negative && w < 0.0) {
            return Err(Error::InvalidWeight { edge: k, value: w });
        }
        m[(e.i, e.j)] -= w;
        m[(e.j, e.i)] -= w;
        m[(e.i, e.i)] += w;
        m[(e.j, e.j)] += w;
    }
    Ok(WeightedLaplacian { matrix: m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

/// How graphs are grouped when assigning them to a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Stratify by class label, splitting individual graphs.
    #[default]
    ByLabel,
    /// Stratify by class label but keep every graph of one `source_id`
    /// on the same side.
    BySource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    graphs: Vec<AttributedGraph>,
    split: Vec<Split>,
}

impl Dataset {
    /// All graphs start in the training split.
    pub fn new(graphs: Vec<AttributedGraph>) -> Result<Self> {
        let n = graphs
            .first()
            .map(AttributedGraph::n)
            .ok_or_else(|| Error::Dataset("dataset is empty".into()))?;
        if let Some((idx, g)) = graphs.iter().enumerate().find(|(_, g)| g.n() != n) {
            return Err(Error::Dataset(format!(
                "graph {idx} has {} nodes, expected {n}",
                g.n()
            )));
        }
        let split = vec![Split::Train; graphs.len()];
        Ok(Self { n, graphs, split })
    }

    pub fn with_split(mut self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.graphs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.graphs.len(),
                actual: split.len(),
            });
        }
        self.split = split;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn graphs(&self) -> &[AttributedGraph] {
        &self.graphs
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn labels(&self) -> Vec<u32> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    pub fn indices_in(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    /// Stable identifiers used in exported tables: `<source_id>#<index>`.
    pub fn graph_ids(&self) -> Vec<String> {
        self.graphs
            .iter()
            .enumerate()
            .map(|(i, g)| format!("{}#{i}", g.source_id))
            .collect()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(s)?;
        file.into_dataset()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&DatasetFile::from_dataset(self, None))?)
    }

    /// Serialize with a free-form `meta` object alongside the normative fields.
    pub fn to_json_string_with_meta(&self, meta: serde_json::Value) -> Result<String> {
        Ok(serde_json::to_string(&DatasetFile::from_dataset(self, Some(meta)))?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetFile {
    n: usize,
    graphs: Vec<GraphRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphRecord {
    label: u32,
    source_id: String,
    positions: Vec<[f64; 2]>,
    edges: Vec<Edge>,
    #[serde(default = "default_split")]
    split: Split,
}

fn default_split() -> Split {
    Split::Train
}

impl DatasetFile {
    fn from_dataset(d: &Dataset, meta: Option<serde_json::Value>) -> Self {
        Self {
            n: d.n,
            graphs: d
                .graphs
                .iter()
                .zip(&d.split)
                .map(|(g, &split)| GraphRecord {
                    label: g.label,
                    source_id: g.source_id.clone(),
                    positions: g.positions.clone(),
                    edges: g.edges.clone(),
                    split,
                })
                .collect(),
            meta,
        }
    }

    fn into_dataset(self) -> Result<Dataset> {
        let n = self.n;
        let split: Vec<Split> = self.graphs.iter().map(|r| r.split).collect();
        let graphs = self
            .graphs
            .into_iter()
            .enumerate()
            .map(|(idx, r)| {
                if r.positions.len() != n {
                    return Err(Error::Dataset(format!(
                        "graph {idx} has {} positions, header says n = {n}",
                        r.positions.len()
                    )));
                }
                AttributedGraph::new(r.positions, r.edges, r.label, r.source_id)
                    .map_err(|e| Error::Dataset(format!("graph {idx}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(graphs)?.with_split(split)
    }
}

/// Stratified, seeded train/validation split.
///
/// The number of training units is `round(ratio * total)`, distributed over
/// classes by largest remainder so each class lands within one unit of its
/// exact share.
pub fn split_dataset(d: &Dataset, ratio: f64, seed: u64, mode: SplitMode) -> Result<Dataset> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} outside (0, 1)")));
    }
    // units per class: each unit is a list of graph indices kept together
    let mut classes: BTreeMap<u32, Vec<Vec<usize>>> = BTreeMap::new();
    match mode {
        SplitMode::ByLabel => {
            for (i, g) in d.graphs.iter().enumerate() {
                classes.entry(g.label).or_default().push(vec![i]);
            }
        }
        SplitMode::BySource => {
            let mut groups: BTreeMap<(u32, &str), Vec<usize>> = BTreeMap::new();
            for (i, g) in d.graphs.iter().enumerate() {
                groups.entry((g.label, g.source_id.as_str())).or_default().push(i);
            }
            for ((label, _), members) in groups {
                classes.entry(label).or_default().push(members);
            }
        }
    }
    if classes.len() < 2 {
        log::warn!("single-class dataset: split is unstratified");
    }
    for (label, units) in &classes {
        if units.len() < 2 {
            log::warn!("class {label} has fewer than 2 split units");
        }
    }

    let total_units: usize = classes.values().map(Vec::len).sum();
    let target = (ratio * total_units as f64).round() as usize;
    let mut quota: Vec<(u32, usize, f64)> = classes
        .iter()
        .map(|(&label, units)| {
            let exact = ratio * units.len() as f64;
            (label, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut assigned: usize = quota.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| quota[b].2.total_cmp(&quota[a].2).then(a.cmp(&b)));
    for &c in order.iter().cycle().take(quota.len() * 2) {
        if assigned >= target {
            break;
        }
        let cap = classes[&quota[c].0].len();
        if quota[c].1 < cap {
            quota[c].1 += 1;
            assigned += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = vec![Split::Validation; d.len()];
    for (label, n_train, _) in quota {
        let mut units = classes[&label].clone();
        units.shuffle(&mut rng);
        let n_train = if units.len() >= 2 {
            n_train.clamp(1, units.len() - 1)
        } else {
            n_train
        };
        for unit in &units[..n_train] {
            for &i in unit {
                split[i] = Split::Train;
            }
        }
    }
    d.clone().with_split(split)
}
