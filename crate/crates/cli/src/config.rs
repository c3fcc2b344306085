//! Run configuration: one JSON document, overridden by command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use diff2dist::eval::{DEFAULT_K_MAX, DEFAULT_K_MIN, DEFAULT_NEIGHBORS};
use diff2dist::{Method, ModelConfig, SplitMode, TrainConfig};
use morpho_sim::sweep::DEFAULT_ATTRIBUTION_K;
use morpho_sim::{ExtractConfig, SimulationConfig, TwoClassConfig};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Isomap neighbourhood size.
    pub neighbors: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_min: DEFAULT_K_MIN,
            k_max: DEFAULT_K_MAX,
            neighbors: DEFAULT_NEIGHBORS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Base for every grid point; the four grid parameters and the seed are
    /// replaced per config.
    pub simulation: SimulationConfig,
    pub extract: ExtractConfig,
    /// Run only the first `limit` grid configs.
    pub limit: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            simulation: SimulationConfig::default(),
            extract: ExtractConfig {
                neighborhood: 16,
                max_graphs: Some(10),
                ..ExtractConfig::default()
            },
            limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GenerateMode {
    #[default]
    TwoClass,
    AttributeOnly,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; copied into every seeded component.
    pub seed: u64,
    /// 1 to 4.
    pub method: u8,
    /// Worker threads; unset uses every core. Not part of the config hash.
    pub threads: Option<usize>,
    pub split_ratio: f64,
    pub split_mode: SplitMode,
    pub generate_mode: GenerateMode,
    pub benchmark: TwoClassConfig,
    /// Boundary-length factor of the attribute-only twin class.
    pub attribute_factor: f64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub attribution_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            method: 4,
            threads: None,
            split_ratio: 0.85,
            split_mode: SplitMode::ByLabel,
            generate_mode: GenerateMode::TwoClass,
            benchmark: TwoClassConfig::default(),
            attribute_factor: 1.5,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
            attribution_k: DEFAULT_ATTRIBUTION_K,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Copies the master seed into every seeded component.
    pub fn propagate_seed(&mut self) {
        self.benchmark.seed = self.seed;
        self.model.init_seed = self.seed;
        self.train.seed = self.seed;
        self.sweep.simulation.seed = self.seed;
    }

    pub fn method(&self) -> Result<Method> {
        Ok(Method::from_index(self.method)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.method()?;
        self.train.validate()?;
        self.sweep.simulation.validate()?;
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be positive".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(CliError::Config(format!("split_ratio {} outside (0, 1)", self.split_ratio)));
        }
        if self.eval.k_min == 0 || self.eval.k_min > self.eval.k_max {
            return Err(CliError::Config("need 1 <= k_min <= k_max".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `threads`.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            threads: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_threads_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            threads: Some(3),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 5, "train": {"epochs": 3}}"#).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_pairs, TrainConfig::default().batch_pairs);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 5}"#).is_err());
    }

    #[test]
    fn seed_reaches_every_component() {
        let mut c = RunConfig { seed: 9, ..RunConfig::default() };
        c.propagate_seed();
        assert_eq!((c.benchmark.seed, c.model.init_seed, c.train.seed, c.sweep.simulation.seed), (9, 9, 9, 9));
    }
}
