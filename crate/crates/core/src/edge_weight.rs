//! Edge-weight functions: unit weights, the Gaussian distance kernel, and the
//! learned MLP over edge attributes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::mlp::{sigmoid, softplus, softplus_inv, Mlp, MlpCache};

/// `w = exp(-d / (2 sigma^2))`, or with `d^2` when `squared` is set.
///
/// `sigma = softplus(sigma_raw)` so any real `sigma_raw` is a valid state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    pub sigma_raw: f64,
    #[serde(default)]
    pub squared: bool,
}

impl GaussianKernel {
    pub fn from_sigma(sigma: f64, squared: bool) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            sigma_raw: softplus_inv(sigma),
            squared,
        })
    }

    pub fn sigma(&self) -> f64 {
        softplus(self.sigma_raw)
    }

    /// Weight at distance `d` and its derivative with respect to sigma.
    pub fn weight_and_dsigma(&self, d: f64) -> (f64, f64) {
        let sigma = self.sigma();
        let x = if self.squared { d * d } else { d };
        let w = (-x / (2.0 * sigma * sigma)).exp();
        (w, w * x / (sigma * sigma * sigma))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EdgeWeightFn {
    Unit,
    Gaussian(GaussianKernel),
    Mlp(Mlp),
}

/// Weights from a forward pass, with the state the backward pass needs.
#[derive(Debug, Clone)]
pub struct EdgeForward {
    pub weights: Vec<f64>,
    cache: Option<MlpCache>,
}

/// Parameter gradients of an edge-weight function.
#[derive(Debug, Clone, PartialEq)]
pub enum EdgeGrad {
    Unit,
    Gaussian { d_sigma: f64, d_sigma_raw: f64 },
    Mlp(Vec<f64>),
}

impl EdgeGrad {
    /// Gradient in the order of [`EdgeWeightFn::params_flat`].
    pub fn into_flat(self) -> Vec<f64> {
        match self {
            EdgeGrad::Unit => Vec::new(),
            EdgeGrad::Gaussian { d_sigma_raw, .. } => vec![d_sigma_raw],
            EdgeGrad::Mlp(g) => g,
        }
    }
}

impl EdgeWeightFn {
    pub fn params_flat(&self) -> Vec<f64> {
        match self {
            EdgeWeightFn::Unit => Vec::new(),
            EdgeWeightFn::Gaussian(k) => vec![k.sigma_raw],
            EdgeWeightFn::Mlp(m) => m.params_flat(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            EdgeWeightFn::Unit => 0,
            EdgeWeightFn::Gaussian(_) => 1,
            EdgeWeightFn::Mlp(m) => m.num_params(),
        }
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                actual: flat.len(),
            });
        }
        match self {
            EdgeWeightFn::Unit => {}
            EdgeWeightFn::Gaussian(k) => k.sigma_raw = flat[0],
            EdgeWeightFn::Mlp(m) => m.set_params_flat(flat)?,
        }
        Ok(())
    }

    /// True when every produced weight is guaranteed nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        match self {
            EdgeWeightFn::Mlp(m) => m.output == crate::mlp::OutputMap::Softplus,
            _ => true,
        }
    }

    pub fn weigh_edges(&self, g: &AttributedGraph) -> Result<Vec<f64>> {
        Ok(self.forward(g, false)?.weights)
    }

    /// Forward pass that keeps what [`backward`](Self::backward) needs.
    pub fn weigh_edges_cached(&self, g: &AttributedGraph) -> Result<EdgeForward> {
        self.forward(g, true)
    }

    fn forward(&self, g: &AttributedGraph, keep_cache: bool) -> Result<EdgeForward> {
        if let Some(k) = g
            .edges()
            .iter()
            .position(|e| e.attr.iter().any(|a| !a.is_finite()))
        {
            return Err(Error::InvalidEdge {
                edge: k,
                reason: "non-finite attribute".into(),
            });
        }
        let (weights, cache) = match self {
            EdgeWeightFn::Unit => (vec![1.0; g.edges().len()], None),
            EdgeWeightFn::Gaussian(kernel) => (
                (0..g.edges().len())
                    .map(|k| kernel.weight_and_dsigma(g.edge_distance(k)).0)
                    .collect(),
                None,
            ),
            EdgeWeightFn::Mlp(m) => {
                let xs: Vec<[f64; 3]> = g.edges().iter().map(|e| e.attr).collect();
                let (w, cache) = m.forward_batch(&xs);
                (w, keep_cache.then_some(cache))
            }
        };
        if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidWeight {
                edge: k,
                value: weights[k],
            });
        }
        Ok(EdgeForward { weights, cache })
    }

    /// Cached forward pass over several graphs, with a single network
    /// evaluation for the MLP. Weights are concatenated in graph order.
    pub fn weigh_many_cached(&self, graphs: &[&AttributedGraph]) -> Result<EdgeForward> {
        match self {
            EdgeWeightFn::Mlp(m) => {
                let xs: Vec<[f64; 3]> = graphs.iter().flat_map(|g| g.edges().iter().map(|e| e.attr)).collect();
                if let Some(k) = xs.iter().position(|a| a.iter().any(|x| !x.is_finite())) {
                    return Err(Error::InvalidEdge {
                        edge: k,
                        reason: "non-finite attribute".into(),
                    });
                }
                let (weights, cache) = m.forward_batch(&xs);
                if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
                    return Err(Error::InvalidWeight {
                        edge: k,
                        value: weights[k],
                    });
                }
                Ok(EdgeForward {
                    weights,
                    cache: Some(cache),
                })
            }
            _ => {
                let mut weights = Vec::new();
                for g in graphs {
                    weights.extend(self.forward(g, false)?.weights);
                }
                Ok(EdgeForward { weights, cache: None })
            }
        }
    }

    /// Summed parameter gradients for a [`weigh_many_cached`](Self::weigh_many_cached)
    /// pass, with `gbar` concatenated the same way as the weights.
    pub fn backward_many(&self, graphs: &[&AttributedGraph], fwd: &EdgeForward, gbar: &[f64]) -> Result<EdgeGrad> {
        let total: usize = graphs.iter().map(|g| g.edges().len()).sum();
        if gbar.len() != total || fwd.weights.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                actual: gbar.len(),
            });
        }
        match self {
            EdgeWeightFn::Unit => Ok(EdgeGrad::Unit),
            EdgeWeightFn::Gaussian(kernel) => {
                let mut d_sigma = 0.0;
                let mut at = 0;
                for g in graphs {
                    for k in 0..g.edges().len() {
                        d_sigma += gbar[at + k] * kernel.weight_and_dsigma(g.edge_distance(k)).1;
                    }
                    at += g.edges().len();
                }
                Ok(EdgeGrad::Gaussian {
                    d_sigma,
                    d_sigma_raw: d_sigma * sigmoid(kernel.sigma_raw),
                })
            }
            EdgeWeightFn::Mlp(m) => {
                let cache = fwd.cache.as_ref().ok_or(Error::MissingForwardCache)?;
                Ok(EdgeGrad::Mlp(m.backward_batch(cache, gbar)?))
            }
        }
    }

    /// Parameter gradients given `gbar[k] = dL/dw_k`.
    pub fn backward(&self, g: &AttributedGraph, fwd: &EdgeForward, gbar: &[f64]) -> Result<EdgeGrad> {
        if gbar.len() != g.edges().len() {
            return Err(Error::DimensionMismatch {
                expected: g.edges().len(),
                actual: gbar.len(),
            });
        }
        match self {
            EdgeWeightFn::Unit => Ok(EdgeGrad::Unit),
            EdgeWeightFn::Gaussian(kernel) => {
                let d_sigma: f64 = gbar
                    .iter()
                    .enumerate()
                    .map(|(k, gb)| gb * kernel.weight_and_dsigma(g.edge_distance(k)).1)
                    .sum();
                Ok(EdgeGrad::Gaussian {
                    d_sigma,
                    d_sigma_raw: d_sigma * sigmoid(kernel.sigma_raw),
                })
            }
            EdgeWeightFn::Mlp(m) => {
                let cache = fwd.cache.as_ref().ok_or(Error::MissingForwardCache)?;
                Ok(EdgeGrad::Mlp(m.backward_batch(cache, gbar)?))
            }
        }
    }
}
