//! Network pricing from per-NPU bandwidth.
//!
//! Every NPU pays for its injection bandwidth into each dimension as link
//! cost. Switch dimensions additionally need a NIC per NPU and one switch
//! per group whose radix is the group size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netsim::BwAllocation;
use crate::scalar::Scalar;
use crate::topology::{BlockKind, Topology};

/// Dollar prices per GB/s (links, NICs) and per radix-GB/s (switches).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitCosts<F: Scalar> {
    pub link_per_gbps: F,
    pub nic_per_gbps: F,
    pub switch_per_radix_gbps: F,
}

impl<F: Scalar> Default for UnitCosts<F> {
    fn default() -> Self {
        UnitCosts { link_per_gbps: F::lit(2.0), nic_per_gbps: F::lit(48.0), switch_per_radix_gbps: F::lit(24.0) }
    }
}

impl<F: Scalar> UnitCosts<F> {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: F| x >= F::zero() && x.is_finite();
        if ok(self.link_per_gbps) && ok(self.nic_per_gbps) && ok(self.switch_per_radix_gbps) {
            Ok(())
        } else {
            Err(Error::InvalidParam("unit costs must be finite and non-negative".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimCost<F: Scalar> {
    pub link_cost: F,
    pub nic_cost: F,
    pub switch_cost: F,
}

impl<F: Scalar> DimCost<F> {
    pub fn total(&self) -> F {
        self.link_cost + self.nic_cost + self.switch_cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown<F: Scalar> {
    pub per_dim: Vec<DimCost<F>>,
    pub total: F,
}

impl<F: Scalar> CostBreakdown<F> {
    pub fn link_cost(&self) -> F {
        self.per_dim.iter().map(|d| d.link_cost).sum()
    }

    pub fn nic_cost(&self) -> F {
        self.per_dim.iter().map(|d| d.nic_cost).sum()
    }

    pub fn switch_cost(&self) -> F {
        self.per_dim.iter().map(|d| d.switch_cost).sum()
    }
}

/// Prices a topology at the given per-dimension bandwidths (GB/s per NPU).
///
/// Takes raw bandwidths so zero entries are allowed; see
/// [`network_cost`] for the allocation-based entry point.
pub fn network_cost_raw<F: Scalar>(t: &Topology, per_dim: &[F], costs: &UnitCosts<F>) -> Result<CostBreakdown<F>> {
    costs.validate()?;
    if per_dim.len() != t.num_dims() {
        return Err(Error::DimMismatch { alloc: per_dim.len(), topo: t.num_dims() });
    }
    if let Some(b) = per_dim.iter().find(|b| !(**b >= F::zero()) || !b.is_finite()) {
        return Err(Error::NonPositiveBandwidth(b.as_f64()));
    }
    let npus = F::count(t.npu_count());
    let per_dim: Vec<DimCost<F>> = t
        .dims()
        .iter()
        .zip(per_dim)
        .map(|(block, &bw)| {
            let link_cost = npus * bw * costs.link_per_gbps;
            if block.kind == BlockKind::Switch {
                let radix = F::count(block.size);
                let switches = npus / radix;
                DimCost {
                    link_cost,
                    nic_cost: npus * bw * costs.nic_per_gbps,
                    switch_cost: switches * radix * bw * costs.switch_per_radix_gbps,
                }
            } else {
                DimCost { link_cost, nic_cost: F::zero(), switch_cost: F::zero() }
            }
        })
        .collect();
    let total = per_dim.iter().map(DimCost::total).sum();
    Ok(CostBreakdown { per_dim, total })
}

pub fn network_cost<F: Scalar>(
    t: &Topology,
    alloc: &BwAllocation<F>,
    costs: &UnitCosts<F>,
) -> Result<CostBreakdown<F>> {
    network_cost_raw(t, &alloc.per_dim, costs)
}

/// `1 / (iteration_time * dollars)`.
pub fn perf_per_cost<F: Scalar>(iteration_time: F, total_cost: F) -> Result<F> {
    if !(iteration_time > F::zero()) || !(total_cost > F::zero()) {
        return Err(Error::InvalidParam(format!(
            "perf-per-cost needs positive time and cost, got {iteration_time} s and ${total_cost}"
        )));
    }
    Ok(F::one() / (iteration_time * total_cost))
}
