use std::collections::BTreeSet;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::alloc::{allocate_with, AllocScheme};
use crate::cost::{network_cost, perf_per_cost};
use crate::error::{Error, Result};
use crate::netsim::simulate_iteration;
use crate::topology::Topology;
use crate::workload::{map_parallelism, Workload};

use super::config::SweepConfig;

/// One evaluated (topology, workload, scheme, budget) point.
///
/// Field names double as CSV headers and JSON keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub topology: String,
    pub workload: String,
    pub scheme: String,
    pub budget_gbps: f64,
    pub iteration_time_s: f64,
    pub compute_time_s: f64,
    pub mp_comm_time_s: f64,
    pub dp_comm_time_s: f64,
    pub per_dim_bw_gbps: Vec<f64>,
    pub per_dim_utilization: Vec<f64>,
    pub avg_utilization: f64,
    pub cost_total: f64,
    pub cost_link: f64,
    pub cost_nic: f64,
    pub cost_switch: f64,
    pub perf_per_cost: f64,
    /// Iteration time over EqualBW's at the lowest budget of the same
    /// topology and workload.
    pub normalized_time: f64,
}

impl ReportRow {
    pub fn comm_time_s(&self) -> f64 {
        self.mp_comm_time_s + self.dp_comm_time_s
    }
}

/// A (topology, workload) pair that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub topology: String,
    pub workload: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<ReportRow>,
    pub skipped: Vec<SkippedRow>,
}

fn dedup_by_key<T: Clone, K: Ord>(
    items: &[T],
    key: impl Fn(&T) -> K,
    what: &str,
    show: impl Fn(&T) -> String,
) -> Vec<T> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(items.len());
    for it in items {
        if seen.insert(key(it)) {
            out.push(it.clone());
        } else {
            warn!("duplicate {what} `{}` ignored", show(it));
        }
    }
    out
}

/// Evaluates the full cross-product of the config.
///
/// Rows come out ordered by topology and workload (config order), then
/// scheme, then ascending budget.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    let topologies = dedup_by_key(&cfg.topologies, Topology::name, "topology", Topology::name);
    let workloads = dedup_by_key(&cfg.workloads, |w| w.name.clone(), "workload", |w| w.name.clone());
    let mut schemes = dedup_by_key(&cfg.schemes, |s| *s, "scheme", |s| s.to_string());
    schemes.sort();
    let mut budgets = dedup_by_key(&cfg.budgets, |b| b.to_bits(), "budget", |b| b.to_string());
    budgets.sort_by(f64::total_cmp);
    if budgets.is_empty() || schemes.is_empty() {
        return Err(Error::Config("sweep has no budgets or no schemes".into()));
    }

    let mut result = SweepResult::default();
    for t in &topologies {
        for w in &workloads {
            match evaluate_pair(cfg, t, w, &schemes, &budgets) {
                Ok(rows) => result.rows.extend(rows),
                Err(e) => {
                    debug!("skipping {} / {}: {e}", t.name(), w.name);
                    result.skipped.push(SkippedRow {
                        topology: t.name(),
                        workload: w.name.clone(),
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    Ok(result)
}

struct Point {
    scheme: AllocScheme,
    budget: f64,
}

fn evaluate_pair(
    cfg: &SweepConfig,
    t: &Topology,
    w: &Workload<f64>,
    schemes: &[AllocScheme],
    budgets: &[f64],
) -> Result<Vec<ReportRow>> {
    let mapping = map_parallelism(t, w)?;
    let eval = |p: &Point| -> Result<ReportRow> {
        let alloc = allocate_with(p.scheme, t, w, &mapping, p.budget, &cfg.alloc)?;
        let sim = simulate_iteration(t, w, &mapping, &alloc, &cfg.net)?;
        let cost = network_cost(t, &alloc, &cfg.costs)?;
        Ok(ReportRow {
            topology: t.name(),
            workload: w.name.clone(),
            scheme: p.scheme.to_string(),
            budget_gbps: p.budget,
            iteration_time_s: sim.iteration_time,
            compute_time_s: sim.compute_time,
            mp_comm_time_s: sim.mp_comm_time,
            dp_comm_time_s: sim.dp_comm_time,
            per_dim_bw_gbps: alloc.per_dim.clone(),
            per_dim_utilization: sim.per_dim_utilization.clone(),
            avg_utilization: sim.avg_bw_utilization,
            cost_total: cost.total,
            cost_link: cost.link_cost(),
            cost_nic: cost.nic_cost(),
            cost_switch: cost.switch_cost(),
            perf_per_cost: perf_per_cost(sim.iteration_time, cost.total)?,
            normalized_time: f64::NAN,
        })
    };

    let base = eval(&Point { scheme: AllocScheme::EqualBw, budget: budgets[0] })?.iteration_time_s;
    if !(base > 0.0) {
        return Err(Error::InvalidParam(format!("baseline iteration time is {base}")));
    }
    let mut rows = Vec::with_capacity(schemes.len() * budgets.len());
    for &scheme in schemes {
        for &budget in budgets {
            let mut row = eval(&Point { scheme, budget })?;
            row.normalized_time = row.iteration_time_s / base;
            rows.push(row);
        }
    }
    Ok(rows)
}
