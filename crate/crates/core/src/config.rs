//! Experiment configuration files (TOML, or JSON by extension).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandwidth::PairBudget;
use crate::error::{Error, Result};
use crate::failure::{CongestionModel, FailureModel};
use crate::montecarlo::{ExperimentPlan, Metric};
use crate::topology::{TopologyParams, Variant};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Output directory for `rows.csv`, `agg.csv` and `effective-config.json`.
    #[serde(default = "default_output")]
    pub output: String,
    pub plan: PlanSection,
    #[serde(default)]
    pub failure: FailureModel,
    #[serde(default)]
    pub congestion: CongestionSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub topologies: Vec<TopologyParams>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_time_grid")]
    pub time_grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials_per_cell: u32,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub pair_sample_budget: PairBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CongestionSection {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

impl Default for CongestionSection {
    fn default() -> Self {
        CongestionSection { sigma: CongestionModel::DEFAULT_SIGMA }
    }
}

fn default_output() -> String {
    "out".into()
}
fn default_gammas() -> Vec<f64> {
    vec![0.05, 0.5, 0.95]
}
fn default_time_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 * 1000.0).collect()
}
fn default_trials() -> u32 {
    200
}
fn default_seed() -> u64 {
    1
}
fn default_metrics() -> Vec<Metric> {
    vec![Metric::ArsMax, Metric::AvgIbw]
}
fn default_sigma() -> f64 {
    CongestionModel::DEFAULT_SIGMA
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.normalized()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.normalized()
    }

    /// Reads JSON for `.json` files and TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Validates every field and fills implied topology port splits. A hybrid
    /// entry giving only `k_10g` is split evenly.
    pub fn normalized(mut self) -> Result<Self> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        for (i, t) in self.plan.topologies.iter_mut().enumerate() {
            let mut p = *t;
            if p.variant == Variant::Hybrid && p.k_10g_h == 0 && p.k_10g_v == 0 {
                p = p.with_variant(Variant::Hybrid, p.k_10g);
            }
            *t = p
                .normalized()
                .map_err(|e| Error::config(format!("plan.topologies[{i}]"), e.to_string()))?;
        }
        self.plan().validate()?;
        Ok(self)
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            topologies: self.plan.topologies.clone(),
            gammas: self.plan.gammas.clone(),
            time_grid: self.plan.time_grid.clone(),
            trials_per_cell: self.plan.trials_per_cell,
            master_seed: self.plan.master_seed,
            metrics: self.plan.metrics.clone(),
            pair_sample_budget: self.plan.pair_sample_budget,
            failure: self.failure,
            sigma: self.congestion.sigma,
        }
    }
}
