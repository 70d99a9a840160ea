//! JSON benchmark configurations. Every field is optional and unknown keys
//! are rejected.
//!
//! `cluster-bench`:
//! ```json
//! { "k": 10, "points_per_cluster": 20, "dims": [10, 101], "noise": [0.2, 0.3, 0.5],
//!   "runs": 10, "restarts": 10, "seed": 0,
//!   "transforms": ["raw", "bpa", "cosine", "softmax"],
//!   "solver": { "lambda": 0.1, "iterations": 5, "log_domain": true,
//!               "symmetrize": false, "tolerance": null } }
//! ```
//!
//! `fsc-bench`:
//! ```json
//! { "episode": { "ways": 5, "shots": 1, "queries_per_way": 15, "feature_dim": 64,
//!                "class_separation": 1.0, "noise_std": 0.25, "seed": 0 },
//!   "episodes": 500, "transforms": ["raw", "bpa"], "solver": { ... } }
//! ```
//!
//! `retrieval-bench`:
//! ```json
//! { "retrieval": { "identities": 20, "queries_per_identity": 1,
//!                  "gallery_per_identity": 5, "feature_dim": 64,
//!                  "noise_std": 0.25, "seed": 0 },
//!   "instances": 100, "transforms": ["raw", "bpa"], "solver": { "lambda": 0.25 } }
//! ```

use std::path::Path;

use bpa_core::{EpisodeSpec, Representation, RetrievalSpec, SolverConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Reads a config file, or returns the defaults when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn require_transforms(transforms: &[Representation]) -> CliResult<()> {
    if transforms.is_empty() {
        return Err(config_error("transform list is empty"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterBenchConfig {
    pub k: usize,
    pub points_per_cluster: usize,
    pub dims: Vec<usize>,
    pub noise: Vec<f64>,
    pub runs: usize,
    pub restarts: usize,
    pub seed: u64,
    pub transforms: Vec<Representation>,
    pub solver: SolverConfig,
}

impl Default for ClusterBenchConfig {
    fn default() -> Self {
        Self {
            k: 10,
            points_per_cluster: 20,
            dims: vec![10, 101],
            noise: vec![0.2, 0.3, 0.5],
            runs: 10,
            restarts: 10,
            seed: 0,
            transforms: vec![
                Representation::Raw,
                Representation::Bpa,
                Representation::Cosine,
                Representation::Softmax,
            ],
            solver: SolverConfig::default(),
        }
    }
}

impl ClusterBenchConfig {
    pub fn validate(&self) -> CliResult<()> {
        require_transforms(&self.transforms)?;
        if self.dims.is_empty() || self.noise.is_empty() {
            return Err(config_error("dims and noise must be non-empty"));
        }
        if let Some(d) = self.dims.iter().find(|&&d| d < 2) {
            return Err(config_error(format!("dimension {d} is below 2")));
        }
        if let Some(s) = self.noise.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(config_error(format!(
                "noise level {s} is not a finite nonnegative number"
            )));
        }
        if self.k == 0 || self.points_per_cluster == 0 || self.runs == 0 || self.restarts == 0 {
            return Err(config_error(
                "k, points_per_cluster, runs and restarts must be >= 1",
            ));
        }
        self.solver.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FscBenchConfig {
    pub episode: EpisodeSpec,
    pub episodes: usize,
    pub transforms: Vec<Representation>,
    pub solver: SolverConfig,
}

impl Default for FscBenchConfig {
    fn default() -> Self {
        Self {
            episode: EpisodeSpec::default(),
            episodes: 500,
            transforms: vec![Representation::Raw, Representation::Bpa],
            solver: SolverConfig::default(),
        }
    }
}

impl FscBenchConfig {
    pub fn validate(&self) -> CliResult<()> {
        require_transforms(&self.transforms)?;
        if self.episodes == 0 {
            return Err(config_error("episodes must be >= 1"));
        }
        self.episode.validate()?;
        self.solver.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalBenchConfig {
    pub retrieval: RetrievalSpec,
    pub instances: usize,
    pub transforms: Vec<Representation>,
    pub solver: SolverConfig,
}

impl Default for RetrievalBenchConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalSpec::default(),
            instances: 100,
            transforms: vec![Representation::Raw, Representation::Bpa],
            solver: SolverConfig::retrieval(),
        }
    }
}

impl RetrievalBenchConfig {
    pub fn validate(&self) -> CliResult<()> {
        require_transforms(&self.transforms)?;
        if self.instances == 0 {
            return Err(config_error("instances must be >= 1"));
        }
        self.solver.validate()?;
        Ok(())
    }
}
