//! JSON configuration schemas with exhaustive validation. Unknown fields
//! are rejected and every validation error names the offending field path.

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use nematic_core::decay::CampaignConfig;
use nematic_core::grid::Grid;
use nematic_core::lp::NormKind;
use nematic_core::solver::{InitialData, Scheme, SolverConfig, SpectrumKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_n_dims")]
    pub n_dims: usize,
    pub points_per_dim: usize,
    /// Box period; defaults to 2 pi * 16.
    #[serde(default = "default_period")]
    pub period: f64,
}

fn default_n_dims() -> usize {
    2
}

fn default_period() -> f64 {
    Grid::DEFAULT_PERIOD
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.n_dims, self.points_per_dim, self.period)
            .map_err(|e| anyhow!("grid: {e}"))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "default_true")]
    pub renormalize_director: bool,
    #[serde(default = "default_true")]
    pub dealias: bool,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_epsilon")]
    pub epsilon_target: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_dt_max() -> f64 {
    0.25
}
fn default_cfl() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_scheme() -> Scheme {
    Scheme::IfRk4
}
fn default_epsilon() -> f64 {
    0.02
}

impl Default for SolverSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl SolverSection {
    pub fn build(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            dt_max: self.dt_max,
            cfl_safety: self.cfl_safety,
            renormalize_director: self.renormalize_director,
            dealias: self.dealias,
            scheme: self.scheme,
            epsilon_target: self.epsilon_target,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| anyhow!("solver: {e}"))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataSection {
    #[serde(default = "default_spectrum")]
    pub spectrum: SpectrumKind,
    #[serde(default = "default_xi0")]
    pub xi0: f64,
    #[serde(default = "default_delta")]
    pub director_delta: f64,
}

fn default_spectrum() -> SpectrumKind {
    SpectrumKind::Peaked
}
fn default_xi0() -> f64 {
    0.7
}
fn default_delta() -> f64 {
    0.4
}

impl Default for InitialDataSection {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl InitialDataSection {
    pub fn build(&self) -> Result<InitialData> {
        if !(self.xi0 > 0.0) {
            return Err(anyhow!("initial_data.xi0 must be positive, got {}", self.xi0));
        }
        if !(self.director_delta > 0.0 && self.director_delta <= 0.9) {
            return Err(anyhow!(
                "initial_data.director_delta must lie in (0, 0.9], got {}",
                self.director_delta
            ));
        }
        Ok(InitialData {
            spectrum: self.spectrum.clone(),
            xi0: self.xi0,
            director_delta: self.director_delta,
        })
    }
}

/// Config for `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub initial_data: InitialDataSection,
    pub t_end: f64,
    pub snapshots: usize,
}

impl SimulateConfig {
    pub fn snapshot_times(&self) -> Result<Vec<f64>> {
        if !(self.t_end > 0.0) {
            return Err(anyhow!("t_end must be positive, got {}", self.t_end));
        }
        if self.snapshots == 0 {
            return Err(anyhow!("snapshots must be at least 1"));
        }
        Ok((1..=self.snapshots)
            .map(|i| i as f64 * self.t_end / self.snapshots as f64)
            .collect())
    }
}

/// Config for `decay`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverSection,
    pub campaign: CampaignSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub epsilons: Vec<f64>,
    pub t0: f64,
    pub n_samples: usize,
    pub derivative_orders: Vec<(u32, u32)>,
    /// Norm kinds by name: sup_besov_m1, l1_besov_p1, x, z.
    pub norms: Vec<String>,
    pub fit_window: (usize, usize),
    #[serde(default)]
    pub initial_data: InitialDataSection,
    #[serde(default)]
    pub linear_only: bool,
    #[serde(default = "default_exponent_tol")]
    pub exponent_tol: f64,
}

fn default_exponent_tol() -> f64 {
    nematic_core::decay::DEFAULT_EXPONENT_TOL
}

impl CampaignSection {
    pub fn build(&self) -> Result<CampaignConfig> {
        if self.epsilons.is_empty() {
            return Err(anyhow!("campaign.epsilons must not be empty"));
        }
        if self.n_samples == 0 {
            return Err(anyhow!("campaign.n_samples must be at least 1"));
        }
        let mut norms = Vec::new();
        for name in &self.norms {
            norms.push(
                NormKind::parse(name)
                    .ok_or_else(|| anyhow!("campaign.norms: unknown norm kind {name:?}"))?,
            );
        }
        let cfg = CampaignConfig {
            epsilons: self.epsilons.clone(),
            t0: self.t0,
            n_samples: self.n_samples,
            derivative_orders: self.derivative_orders.clone(),
            norms,
            fit_window: self.fit_window,
            data: self.initial_data.build().context("campaign.initial_data")?,
            linear_only: self.linear_only,
            exponent_tol: self.exponent_tol,
        };
        cfg.validate().map_err(|e| anyhow!("campaign: {e}"))?;
        Ok(cfg)
    }
}

/// Seeds file for `trajectory`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsFile {
    pub seeds: Vec<Vec<f64>>,
    /// Optional index pairs for the separation regression.
    #[serde(default)]
    pub pairs: Vec<(usize, usize)>,
}

pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| anyhow!("config schema ({}): {e}", path.display()))
}
