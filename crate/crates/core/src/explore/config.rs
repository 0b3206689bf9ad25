use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alloc::{AllocOptions, AllocScheme};
use crate::cost::UnitCosts;
use crate::error::{Error, Result};
use crate::netsim::NetParams;
use crate::topology::{Topology, TopologySpec, DEFAULT_MAX_DIMS};
use crate::workload::Workload;

use super::report::ReportFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory the report files are written to.
    #[serde(default = "default_out_dir")]
    pub path: PathBuf,
    #[serde(default)]
    pub format: ReportFormat,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from(".")
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { path: default_out_dir(), format: ReportFormat::default() }
    }
}

fn default_max_dims() -> usize {
    DEFAULT_MAX_DIMS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    topologies: Vec<TopologySpec>,
    workloads: Vec<Workload<f64>>,
    budgets: Vec<f64>,
    schemes: Vec<AllocScheme>,
    #[serde(default)]
    net: NetParams<f64>,
    #[serde(default)]
    costs: UnitCosts<f64>,
    #[serde(default)]
    output: OutputSpec,
    #[serde(default = "default_max_dims")]
    max_dims: usize,
    #[serde(default)]
    zero_traffic_floor: Option<f64>,
}

/// A validated sweep description.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub topologies: Vec<Topology>,
    pub workloads: Vec<Workload<f64>>,
    pub budgets: Vec<f64>,
    pub schemes: Vec<AllocScheme>,
    pub net: NetParams<f64>,
    pub costs: UnitCosts<f64>,
    pub output: OutputSpec,
    pub alloc: AllocOptions<f64>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        Self::from_raw(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        if raw.topologies.is_empty() {
            return cfg_err("topologies must not be empty".into());
        }
        if raw.workloads.is_empty() {
            return cfg_err("workloads must not be empty".into());
        }
        if raw.budgets.is_empty() {
            return cfg_err("budgets must not be empty".into());
        }
        if raw.schemes.is_empty() {
            return cfg_err("schemes must not be empty".into());
        }
        if let Some(b) = raw.budgets.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return cfg_err(format!("budgets must be positive, got {b}"));
        }
        let topologies = raw
            .topologies
            .iter()
            .enumerate()
            .map(|(i, t)| t.build(raw.max_dims).map_err(|e| Error::Config(format!("topologies[{i}]: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        for (i, w) in raw.workloads.iter().enumerate() {
            w.validate().map_err(|e| Error::Config(format!("workloads[{i}]: {e}")))?;
        }
        raw.net.validate().map_err(|e| Error::Config(format!("net: {e}")))?;
        raw.costs.validate().map_err(|e| Error::Config(format!("costs: {e}")))?;
        let mut alloc = AllocOptions::refined(raw.net.clone());
        if let Some(f) = raw.zero_traffic_floor {
            if !(0.0..1.0).contains(&f) {
                return cfg_err(format!("zero_traffic_floor must be in [0, 1), got {f}"));
            }
            alloc.zero_traffic_floor = f;
        }
        Ok(SweepConfig {
            topologies,
            workloads: raw.workloads,
            budgets: raw.budgets,
            schemes: raw.schemes,
            net: raw.net,
            costs: raw.costs,
            output: raw.output,
            alloc,
        })
    }
}
