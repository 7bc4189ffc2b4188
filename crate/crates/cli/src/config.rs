//! Experiment configuration loaded from JSON. Command-line flags override
//! individual fields after loading.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use msfa_forge::{BlockShape, OptimConfig};

use crate::CliError;

fn default_outer_iters() -> usize {
    200
}

fn default_inner_max_iters() -> usize {
    200
}

fn default_inner_tol() -> f64 {
    1e-6
}

fn default_rho() -> f64 {
    0.9
}

fn default_restarts() -> usize {
    1
}

/// One experiment: training/test data, tile geometry, solver knobs,
/// model-autocorrelation parameters, and baseline toggles.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub training: Vec<PathBuf>,
    #[serde(default)]
    pub test: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub block_w: usize,
    pub block_h: usize,
    #[serde(default = "default_outer_iters")]
    pub outer_iters: usize,
    #[serde(default = "default_inner_max_iters")]
    pub inner_max_iters: usize,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default)]
    pub seed: u64,
    /// Wiener ridge; absent means the trace-relative default, 0 demands
    /// exact invertibility.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_rho")]
    pub rho_spatial: f64,
    #[serde(default = "default_rho")]
    pub rho_spectral: f64,
    /// Non-trained designs to include in comparisons: "bandpass", "bayer".
    #[serde(default)]
    pub baselines: Vec<String>,
    #[serde(default)]
    pub early_stop: bool,
    /// Independent optimization starts (seeds seed, seed+1, ...); the best
    /// final objective wins.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.training.is_empty() {
            return Err(CliError::Usage("config lists no training cubes".into()));
        }
        for p in self.training.iter().chain(&self.test) {
            if !p.exists() {
                return Err(CliError::Usage(format!("missing input {}", p.display())));
            }
        }
        if self.block_w == 0 || self.block_h == 0 {
            return Err(CliError::Usage(format!(
                "block shape {}x{} must be positive",
                self.block_w, self.block_h
            )));
        }
        if self.restarts == 0 {
            return Err(CliError::Usage("restarts must be at least 1".into()));
        }
        for b in &self.baselines {
            if b != "bandpass" && b != "bayer" {
                return Err(CliError::Usage(format!(
                    "unknown baseline {b:?} (expected \"bandpass\" or \"bayer\")"
                )));
            }
        }
        Ok(())
    }

    pub fn block_shape(&self) -> BlockShape {
        BlockShape::new(self.block_w, self.block_h)
    }

    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            outer_iters: self.outer_iters,
            inner_max_iters: self.inner_max_iters,
            inner_tol: self.inner_tol,
            seed: self.seed,
            ridge: self.epsilon,
            log_every: 10,
            early_stop: self.early_stop,
        }
    }
}
