//! kNN classification and Isomap embeddings over distance matrices.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};
use crate::graph::Split;
use crate::spectral::eigh_symmetric;

pub const DEFAULT_K_MIN: usize = 3;
pub const DEFAULT_K_MAX: usize = 50;
pub const DEFAULT_NEIGHBORS: usize = 15;

/// Which values of K a sweep visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KRange {
    /// Every integer in `[k_min, k_max]`.
    #[default]
    Inclusive,
    /// Only `k_min` and `k_max`.
    Endpoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnReport {
    /// `(K, accuracy)` in sweep order.
    pub accuracies: Vec<(usize, f64)>,
    pub best_k: usize,
    pub best_accuracy: f64,
}

impl KnnReport {
    pub fn accuracy_at(&self, k: usize) -> Option<f64> {
        self.accuracies.iter().find(|(kk, _)| *kk == k).map(|x| x.1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("K,accuracy\n");
        for (k, a) in &self.accuracies {
            out.push_str(&format!("{k},{a:.6}\n"));
        }
        out
    }
}

/// Training indices of `dm` sorted by distance to `q`, ties by index.
fn ranked_train(dm: &DistanceMatrix, train: &[usize], q: usize) -> Vec<usize> {
    let mut order = train.to_vec();
    order.sort_by(|&a, &b| dm.get(q, a).total_cmp(&dm.get(q, b)).then(a.cmp(&b)));
    order
}

fn vote(labels: &[u32], neighbors: &[usize]) -> u32 {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &i in neighbors {
        *counts.entry(labels[i]).or_default() += 1;
    }
    // BTreeMap iterates labels ascending, so the first maximum is the smallest label
    counts
        .into_iter()
        .fold((u32::MAX, 0), |best, (l, c)| if c > best.1 { (l, c) } else { best })
        .0
}

fn split_indices(dm: &DistanceMatrix) -> Result<(Vec<usize>, Vec<usize>)> {
    let train: Vec<usize> = (0..dm.len()).filter(|&i| dm.split[i] == Split::Train).collect();
    let val: Vec<usize> = (0..dm.len()).filter(|&i| dm.split[i] == Split::Validation).collect();
    if val.is_empty() {
        return Err(Error::Evaluation("validation set is empty".into()));
    }
    if train.is_empty() {
        return Err(Error::Evaluation("training set is empty".into()));
    }
    Ok((train, val))
}

/// Predicted label of every validation point, in index order.
pub fn knn_predict(dm: &DistanceMatrix, k: usize) -> Result<Vec<(usize, u32)>> {
    let (train, val) = split_indices(dm)?;
    check_k(k, train.len())?;
    Ok(val
        .iter()
        .map(|&q| (q, vote(&dm.labels, &ranked_train(dm, &train, q)[..k])))
        .collect())
}

fn check_k(k: usize, n_train: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Evaluation("k must be positive".into()));
    }
    if k > n_train {
        return Err(Error::Evaluation(format!("k = {k} exceeds the {n_train} training points")));
    }
    Ok(())
}

/// Validation accuracy of majority vote over the `k` nearest training points.
pub fn knn_classify(dm: &DistanceMatrix, k: usize) -> Result<f64> {
    let pred = knn_predict(dm, k)?;
    let correct = pred.iter().filter(|(q, l)| dm.labels[*q] == *l).count();
    Ok(correct as f64 / pred.len() as f64)
}

/// Accuracy for each K in the range, with the best one. `k_max` is clamped
/// to the training set size.
pub fn knn_sweep(dm: &DistanceMatrix, k_min: usize, k_max: usize, range: KRange) -> Result<KnnReport> {
    let (train, val) = split_indices(dm)?;
    let k_hi = k_max.min(train.len());
    if k_hi < k_max {
        log::warn!("k_max {k_max} clamped to training set size {}", train.len());
    }
    if k_min == 0 || k_min > k_hi {
        return Err(Error::Evaluation(format!("empty K range [{k_min}, {k_hi}]")));
    }
    let ks: Vec<usize> = match range {
        KRange::Inclusive => (k_min..=k_hi).collect(),
        KRange::Endpoints if k_min == k_hi => vec![k_min],
        KRange::Endpoints => vec![k_min, k_hi],
    };
    // rank once per validation point, then read every K off the same order
    let ranked: Vec<Vec<usize>> = val.iter().map(|&q| ranked_train(dm, &train, q)).collect();
    let mut accuracies = Vec::with_capacity(ks.len());
    for &k in &ks {
        let correct = val
            .iter()
            .zip(&ranked)
            .filter(|(&q, r)| vote(&dm.labels, &r[..k]) == dm.labels[q])
            .count();
        accuracies.push((k, correct as f64 / val.len() as f64));
    }
    let (best_k, best_accuracy) = accuracies
        .iter()
        .copied()
        .fold((0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
    Ok(KnnReport {
        accuracies,
        best_k,
        best_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub coords: Vec<[f64; 2]>,
    pub ids: Vec<String>,
    pub labels: Vec<u32>,
    pub split: Vec<Split>,
}

impl Embedding2D {
    pub fn pairwise_distance(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.coords[a], self.coords[b]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,x,y,label,split\n");
        for (a, c) in self.coords.iter().enumerate() {
            let split = match self.split[a] {
                Split::Train => "train",
                Split::Validation => "validation",
            };
            out.push_str(&format!(
                "{},{:.9e},{:.9e},{},{}\n",
                self.ids[a], c[0], c[1], self.labels[a], split
            ));
        }
        out
    }
}

/// Symmetric kNN graph: `i ~ j` when either is among the other's nearest.
fn neighbor_graph(dm: &DistanceMatrix, neighbors: usize) -> DMatrix<f64> {
    let m = dm.len();
    let mut g = DMatrix::from_element(m, m, f64::INFINITY);
    for i in 0..m {
        g[(i, i)] = 0.0;
        let mut order: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dm.get(i, a).total_cmp(&dm.get(i, b)).then(a.cmp(&b)));
        for &j in &order[..neighbors] {
            let d = dm.get(i, j);
            g[(i, j)] = d;
            g[(j, i)] = d;
        }
    }
    g
}

fn components(g: &DMatrix<f64>) -> Vec<usize> {
    let m = g.nrows();
    let mut comp = vec![usize::MAX; m];
    let mut next = 0;
    for s in 0..m {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = next;
        while let Some(u) = stack.pop() {
            for v in 0..m {
                if comp[v] == usize::MAX && g[(u, v)].is_finite() {
                    comp[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Join components with the shortest inter-component edge until connected.
fn bridge(dm: &DistanceMatrix, g: &mut DMatrix<f64>) {
    loop {
        let comp = components(g);
        if comp.iter().all(|&c| c == 0) {
            return;
        }
        let m = g.nrows();
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..m {
            for j in i + 1..m {
                if comp[i] != comp[j] && dm.get(i, j) < best.0 {
                    best = (dm.get(i, j), i, j);
                }
            }
        }
        let (d, i, j) = best;
        log::warn!("neighbor graph disconnected; bridging {i} and {j} at distance {d}");
        g[(i, j)] = d;
        g[(j, i)] = d;
    }
}

/// All-pairs shortest paths by Floyd-Warshall.
fn geodesics(mut g: DMatrix<f64>) -> DMatrix<f64> {
    let m = g.nrows();
    for k in 0..m {
        let row_k: Vec<f64> = (0..m).map(|j| g[(k, j)]).collect();
        for i in 0..m {
            let dik = g[(i, k)];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..m {
                let via = dik + row_k[j];
                if via < g[(i, j)] {
                    g[(i, j)] = via;
                }
            }
        }
    }
    g
}

/// Classical MDS of a distance matrix into two dimensions.
pub fn classical_mds(d: &DMatrix<f64>) -> Result<Vec<[f64; 2]>> {
    let m = d.nrows();
    let sq = d.map(|x| x * x);
    let row_mean: Vec<f64> = (0..m).map(|i| sq.row(i).sum() / m as f64).collect();
    let total = row_mean.iter().sum::<f64>() / m as f64;
    let b = DMatrix::from_fn(m, m, |i, j| -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + total));
    let s = eigh_symmetric(&b)?;
    let mut coords = vec![[0.0; 2]; m];
    for c in 0..2 {
        let idx = m - 1 - c;
        let scale = s.eigenvalues[idx].max(0.0).sqrt();
        let v = s.eigenvectors.column(idx);
        // fix the sign so the largest-magnitude entry is positive
        let pivot = (0..m).fold(0, |p, i| if v[i].abs() > v[p].abs() { i } else { p });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            coords[i][c] = sign * scale * v[i];
        }
    }
    for c in 0..2 {
        let mean = coords.iter().map(|x| x[c]).sum::<f64>() / m as f64;
        for x in coords.iter_mut() {
            x[c] -= mean;
        }
    }
    Ok(coords)
}

/// Isomap: symmetric kNN graph, geodesic distances, classical MDS.
pub fn isomap_embed(dm: &DistanceMatrix, neighbors: usize) -> Result<Embedding2D> {
    let m = dm.len();
    if m < 3 {
        return Err(Error::Evaluation(format!("isomap needs at least 3 points, got {m}")));
    }
    if neighbors == 0 {
        return Err(Error::Evaluation("neighbors must be positive".into()));
    }
    if let Some(x) = dm.values.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::Evaluation(format!("invalid distance {x}")));
    }
    let mut g = neighbor_graph(dm, neighbors.min(m - 1));
    bridge(dm, &mut g);
    let geo = geodesics(g);
    let coords = classical_mds(&geo)?;
    if coords.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Evaluation("non-finite embedding".into()));
    }
    Ok(Embedding2D {
        coords,
        ids: dm.ids.clone(),
        labels: dm.labels.clone(),
        split: dm.split.clone(),
    })
}

/// Embeddings for several matrices at once.
pub fn isomap_embed_all(dms: &[DistanceMatrix], neighbors: usize) -> Result<Vec<Embedding2D>> {
    dms.par_iter().map(|d| isomap_embed(d, neighbors)).collect()
}
