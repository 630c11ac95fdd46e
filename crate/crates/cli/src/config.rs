//! Run configuration: one JSON document per run, overridable by flags.
//! Every effective value (including defaults) is echoed into the report.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodOpt {
    Lp,
    Sinkhorn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Cost exponent (p > 1).
    pub p: f64,
    /// Static solver backend.
    pub method: MethodOpt,
    /// Entropic regularization for the sinkhorn backend.
    pub eps: f64,
    /// Iteration budget for iterative solvers.
    pub max_iters: usize,
    /// Cells per axis for grid commands.
    pub grid: usize,
    /// Time steps for dynamic commands.
    pub timesteps: usize,
    /// Convergence tolerance for iterative solvers.
    pub tol: f64,
    /// Seed for every randomized fixture.
    pub seed: u64,
    /// Output directory for reports and tables.
    pub out: Option<PathBuf>,
    /// Run the relative-shift search in `static`.
    pub optimize_shift: bool,
    /// Extraction times for `geodesic`.
    pub times: Vec<f64>,
    /// Suite selection for `verify`.
    pub suites: Vec<String>,
    /// Corruption injection for `verify` (name of one suite).
    pub corrupt: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            p: 2.0,
            method: MethodOpt::Lp,
            eps: 1e-2,
            max_iters: 200_000,
            grid: 64,
            timesteps: 32,
            tol: 1e-6,
            seed: 0,
            out: None,
            optimize_shift: false,
            times: vec![0.0, 0.5, 1.0],
            suites: vec![
                "campbell".into(),
                "balancing".into(),
                "equality".into(),
                "ce".into(),
                "metric".into(),
            ],
            corrupt: None,
        }
    }
}

/// Documented caps: resolutions beyond these are refused up front.
pub const MAX_GRID: usize = 512;
pub const MAX_TIMESTEPS: usize = 2048;

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p.is_finite() || self.p <= 1.0 {
            bail!("config: p must satisfy p > 1, got {}", self.p);
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            bail!("config: eps must be positive");
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            bail!("config: tol must be positive");
        }
        if self.grid == 0 || self.grid > MAX_GRID {
            bail!("config: grid must lie in 1..={MAX_GRID}");
        }
        if self.timesteps == 0 || self.timesteps > MAX_TIMESTEPS {
            bail!("config: timesteps must lie in 1..={MAX_TIMESTEPS}");
        }
        if self.times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            bail!("config: extraction times must lie in [0, 1]");
        }
        Ok(())
    }
}
