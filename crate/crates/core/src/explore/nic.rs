//! Traffic leaving each NPU through its last (NIC-facing) dimension.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::alloc::phase_traffic;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::topology::Topology;
use crate::workload::{map_parallelism, Workload};

use super::config::SweepConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LastDimTraffic<F: Scalar> {
    /// MP and DP bytes per NPU on the last dimension.
    pub total: F,
    /// The DP All-Reduce's share of `total`.
    pub dp: F,
}

pub fn last_dim_traffic<F: Scalar>(t: &Topology, w: &Workload<F>) -> Result<LastDimTraffic<F>> {
    let mapping = map_parallelism(t, w)?;
    let traffic = phase_traffic(t, w, &mapping);
    let n = t.num_dims() - 1;
    Ok(LastDimTraffic { total: traffic.mp[n] + traffic.dp[n], dp: traffic.dp[n] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NicTrafficRow {
    pub topology: String,
    pub workload: String,
    pub dims: usize,
    pub last_dim_bytes: f64,
    pub last_dim_dp_bytes: f64,
    /// NIC bandwidth per NPU, relative to the reference topology, needed
    /// to clear the last dimension in the same time.
    pub nic_multiplier: f64,
}

/// Last-dimension traffic of every (topology, workload) pair in the config.
///
/// For each workload the reference is the mappable topology with the most
/// dimensions (first one on ties). Unmappable pairs are left out.
pub fn nic_traffic(cfg: &SweepConfig) -> Result<Vec<NicTrafficRow>> {
    let mut rows = Vec::new();
    for w in &cfg.workloads {
        let mut entries = Vec::new();
        for t in &cfg.topologies {
            match last_dim_traffic(t, w) {
                Ok(m) => entries.push((t, m)),
                Err(e) => warn!("{} / {}: {e}", t.name(), w.name),
            }
        }
        let Some(reference) = entries.iter().fold(None::<&(&Topology, LastDimTraffic<f64>)>, |best, e| match best {
            Some(b) if b.0.num_dims() >= e.0.num_dims() => Some(b),
            _ => Some(e),
        }) else {
            continue;
        };
        let ref_bytes = reference.1.total;
        for (t, m) in &entries {
            let nic_multiplier = if ref_bytes > 0.0 {
                m.total / ref_bytes
            } else if m.total == 0.0 {
                1.0
            } else {
                f64::INFINITY
            };
            rows.push(NicTrafficRow {
                topology: t.name(),
                workload: w.name.clone(),
                dims: t.num_dims(),
                last_dim_bytes: m.total,
                last_dim_dp_bytes: m.dp,
                nic_multiplier,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::NothingToReport);
    }
    Ok(rows)
}
