//! Learned spectral distances between attributed graphs.
//!
//! Edge weights come from a parametric function of per-edge attributes; the
//! weighted Laplacian spectra of two graphs are compared with a trainable
//! diffusion distance, and every stage is differentiable so the whole chain
//! can be fit with a contrastive loss.

pub mod distance;
pub mod edge_weight;
pub mod error;
pub mod eval;
pub mod graph;
pub mod mlp;
pub mod model;
pub mod spectral;
pub mod train;

pub use distance::{
    distance_matrix_from_spectra, gdd_pair, gdd_pair_backward, gdd_sup, DistanceKind, DistanceMatrix,
    DistanceParams, ExpConvention,
};
pub use edge_weight::{EdgeWeightFn, GaussianKernel};
pub use error::{Error, Result};
pub use eval::{isomap_embed, knn_classify, knn_sweep, Embedding2D, KRange, KnnReport};
pub use graph::{
    build_laplacian, split_dataset, AttributedGraph, Dataset, Edge, Split, SplitMode, WeightedLaplacian,
};
pub use mlp::{Mlp, OutputMap};
pub use model::{Checkpoint, Method, Model, ModelConfig};
pub use spectral::{eigh, Spectrum};
pub use train::{train, TrainConfig, TrainOutcome};
