//! A complete distance model: edge-weight function plus distance parameters,
//! and its JSON checkpoint.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{
    distance_matrix_from_spectra, DistanceKind, DistanceMatrix, DistanceParams, ExpConvention,
    DEFAULT_NUM_TIMES, DEFAULT_T_MAX, DEFAULT_T_MIN,
};
use crate::edge_weight::{EdgeWeightFn, GaussianKernel};
use crate::error::{Error, Result};
use crate::graph::{build_laplacian, build_signed_laplacian, AttributedGraph, Dataset, WeightedLaplacian};
use crate::mlp::{Mlp, OutputMap, DEFAULT_SIZES};
use crate::spectral::{eigh, Spectrum};

/// The four methods of the comparison ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classical distance on unit weights; nothing trained.
    UnweightedGdd,
    /// Gaussian kernel weights with fixed sigma; times and beta trained.
    GaussianFixedSigma,
    /// Gaussian kernel weights; times, beta and sigma trained.
    GaussianTuned,
    /// MLP edge weights; times, beta and network trained.
    AnnWeights,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::UnweightedGdd,
        Method::GaussianFixedSigma,
        Method::GaussianTuned,
        Method::AnnWeights,
    ];

    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1..=4 => Ok(Self::ALL[i as usize - 1]),
            _ => Err(Error::Config(format!("method must be 1-4, got {i}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Method::UnweightedGdd => 1,
            Method::GaussianFixedSigma => 2,
            Method::GaussianTuned => 3,
            Method::AnnWeights => 4,
        }
    }

    pub fn trains_distance(self) -> bool {
        self != Method::UnweightedGdd
    }

    pub fn trains_edge_fn(self) -> bool {
        matches!(self, Method::GaussianTuned | Method::AnnWeights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_times: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub convention: ExpConvention,
    /// Use `d^2` in the Gaussian kernel exponent.
    pub gaussian_squared: bool,
    /// Initial (and, for method 2, fixed) kernel radius. When unset it is
    /// chosen so the median training edge distance maps to `exp(-1)`.
    pub sigma: Option<f64>,
    pub mlp_sizes: Vec<usize>,
    pub mlp_output: OutputMap,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_times: DEFAULT_NUM_TIMES,
            t_min: DEFAULT_T_MIN,
            t_max: DEFAULT_T_MAX,
            convention: ExpConvention::Decay,
            gaussian_squared: false,
            sigma: None,
            mlp_sizes: DEFAULT_SIZES.to_vec(),
            mlp_output: OutputMap::Softplus,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub method: Method,
    pub edge_fn: EdgeWeightFn,
    pub distance: DistanceParams,
}

impl Model {
    /// Initial state for `method`, with data-dependent scales taken from
    /// the `train` graphs only.
    pub fn init(method: Method, n: usize, train: &[&AttributedGraph], cfg: &ModelConfig) -> Result<Self> {
        let distance = DistanceParams::new(n, cfg.num_times, cfg.t_min, cfg.t_max, cfg.convention)?;
        let edge_fn = match method {
            Method::UnweightedGdd => EdgeWeightFn::Unit,
            Method::GaussianFixedSigma | Method::GaussianTuned => {
                let sigma = match cfg.sigma {
                    Some(s) => s,
                    None => default_sigma(train, cfg.gaussian_squared)?,
                };
                EdgeWeightFn::Gaussian(GaussianKernel::from_sigma(sigma, cfg.gaussian_squared)?)
            }
            Method::AnnWeights => {
                if cfg.mlp_sizes.first() != Some(&3) || cfg.mlp_sizes.last() != Some(&1) {
                    return Err(Error::Config(format!(
                        "MLP sizes must start at 3 and end at 1, got {:?}",
                        cfg.mlp_sizes
                    )));
                }
                let mut mlp = Mlp::new(&cfg.mlp_sizes, cfg.mlp_output, cfg.init_seed);
                let (mean, std) = attribute_stats(train);
                mlp.set_standardization(mean, std);
                EdgeWeightFn::Mlp(mlp)
            }
        };
        Ok(Self {
            method,
            edge_fn,
            distance,
        })
    }

    pub fn n(&self) -> usize {
        self.distance.n()
    }

    pub fn num_trainable(&self) -> usize {
        let mut k = 0;
        if self.method.trains_distance() {
            k += self.distance.p() + self.distance.n();
        }
        if self.method.trains_edge_fn() {
            k += self.edge_fn.num_params();
        }
        k
    }

    /// Distance parameters first, then edge-function parameters.
    pub fn trainable_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_trainable());
        if self.method.trains_distance() {
            v.extend(self.distance.params_flat());
        }
        if self.method.trains_edge_fn() {
            v.extend(self.edge_fn.params_flat());
        }
        v
    }

    pub fn set_trainable_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_trainable() {
            return Err(Error::DimensionMismatch {
                expected: self.num_trainable(),
                actual: flat.len(),
            });
        }
        let mut at = 0;
        if self.method.trains_distance() {
            let k = self.distance.p() + self.distance.n();
            self.distance.set_params_flat(&flat[..k])?;
            at = k;
        }
        if self.method.trains_edge_fn() {
            self.edge_fn.set_params_flat(&flat[at..])?;
        }
        Ok(())
    }

    pub fn laplacian(&self, g: &AttributedGraph, weights: &[f64]) -> Result<WeightedLaplacian> {
        if self.edge_fn.is_nonnegative() {
            build_laplacian(g, weights)
        } else {
            build_signed_laplacian(g, weights)
        }
    }

    pub fn spectrum(&self, g: &AttributedGraph) -> Result<Spectrum> {
        if g.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: g.n(),
            });
        }
        let w = self.edge_fn.weigh_edges(g)?;
        eigh(&self.laplacian(g, &w)?)
    }

    pub fn spectra(&self, graphs: &[AttributedGraph]) -> Result<Vec<Spectrum>> {
        graphs.par_iter().map(|g| self.spectrum(g)).collect()
    }

    pub fn distance_kind(&self) -> DistanceKind<'_> {
        match self.method {
            Method::UnweightedGdd => DistanceKind::Classical(self.distance.convention),
            _ => DistanceKind::Learned(&self.distance),
        }
    }

    pub fn pair_distance(&self, s1: &Spectrum, s2: &Spectrum) -> Result<f64> {
        self.distance_kind().pair(&s1.eigenvalues, &s2.eigenvalues)
    }

    /// Spectra are computed once per graph and shared by all pairs.
    pub fn distance_matrix(&self, dataset: &Dataset) -> Result<DistanceMatrix> {
        let spectra = self.spectra(dataset.graphs())?;
        distance_matrix_from_spectra(dataset, &spectra, self.distance_kind())
    }
}

fn default_sigma(train: &[&AttributedGraph], squared: bool) -> Result<f64> {
    let mut d: Vec<f64> = train
        .iter()
        .flat_map(|g| (0..g.edges().len()).map(move |k| g.edge_distance(k)))
        .filter(|d| *d > 0.0)
        .collect();
    if d.is_empty() {
        return Ok(1.0);
    }
    d.sort_by(f64::total_cmp);
    let median = d[d.len() / 2];
    let x = if squared { median * median } else { median };
    // exp(-x / (2 sigma^2)) = exp(-1)
    Ok((x / 2.0).sqrt())
}

fn attribute_stats(train: &[&AttributedGraph]) -> (Vec<f64>, Vec<f64>) {
    let attrs: Vec<[f64; 3]> = train
        .iter()
        .flat_map(|g| g.edges().iter().map(|e| e.attr))
        .collect();
    let count = attrs.len().max(1) as f64;
    let mut mean = vec![0.0; 3];
    for a in &attrs {
        for c in 0..3 {
            mean[c] += a[c] / count;
        }
    }
    let mut var = vec![0.0; 3];
    for a in &attrs {
        for c in 0..3 {
            var[c] += (a[c] - mean[c]).powi(2) / count;
        }
    }
    (mean, var.into_iter().map(f64::sqrt).collect())
}

pub const CHECKPOINT_FORMAT: &str = "diff2dist-checkpoint";

/// Self-describing trained-model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: String,
    pub method: u8,
    pub n: usize,
    pub edge_fn: EdgeWeightFn,
    pub distance: DistanceParams,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn from_model(model: &Model, meta: serde_json::Value) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            method: model.method.index(),
            n: model.n(),
            edge_fn: model.edge_fn.clone(),
            distance: model.distance.clone(),
            meta,
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("not a checkpoint: format = {:?}", self.format)));
        }
        if self.distance.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: self.distance.n(),
            });
        }
        if let EdgeWeightFn::Mlp(m) = &self.edge_fn {
            m.validate()?;
        }
        Ok(Model {
            method: Method::from_index(self.method)?,
            edge_fn: self.edge_fn,
            distance: self.distance,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
