//! A simplified 2-D polygonal cell-division simulator and the extraction of
//! attributed cell-neighbourhood graphs from its meshes.
//!
//! This is a small mechanical model, not a faithful tissue mechanics code:
//! uniform growth, threshold and random division along the shortest chord
//! through the centroid (or a random one), and local spring relaxation.

pub mod bench;
pub mod error;
pub mod extract;
pub mod mesh;
pub mod sim;
pub mod sweep;

pub use bench::{attribute_only_benchmark, two_class_benchmark, TwoClassConfig};
pub use error::{MorphoError, Result};
pub use extract::{extract_graphs, ExtractConfig};
pub use mesh::Tessellation;
pub use sim::{default_initial_tissue, simulate, DivisionEvent, SimulationConfig, SimulationResult};
pub use sweep::{attribute_parameters, parameter_grid, run_sweep, Attribution};
