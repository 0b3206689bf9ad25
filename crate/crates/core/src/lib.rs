//! Simulator and design-space explorer for multi-dimensional hierarchical
//! training interconnects.
//!
//! The models are generic over the scalar type ([`Scalar`]); the aliases
//! below fix it to `f64`, which is what the explorer and CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod cost;
pub mod error;
pub mod explore;
pub mod netsim;
pub mod scalar;
pub mod schedule;
pub mod topology;
pub mod workload;

pub use alloc::{allocate, equal_bw, message_bw, smart_bw_shared, smart_bw_unshared, AllocScheme};
pub use cost::{network_cost, perf_per_cost};
pub use error::{Error, Result};
pub use netsim::{simulate_collective, simulate_iteration, stage_duration, transfer_time};
pub use scalar::Scalar;
pub use schedule::{build_basic_stage, build_hierarchical_allreduce, per_dim_traffic, verify_schedule_dataflow};
pub use topology::{parse_topology, topology_name, BlockKind, DimBlock, Topology};
pub use workload::{map_parallelism, ParallelismMapping};

pub type Workload = workload::Workload<f64>;
pub type Stage = schedule::Stage<f64>;
pub type Step = schedule::Step<f64>;
pub type CollectiveSchedule = schedule::CollectiveSchedule<f64>;
pub type NetParams = netsim::NetParams<f64>;
pub type BwAllocation = netsim::BwAllocation<f64>;
pub type CommReport = netsim::CommReport<f64>;
pub type SimReport = netsim::SimReport<f64>;
pub type SharedSplit = alloc::SharedSplit<f64>;
pub type UnitCosts = cost::UnitCosts<f64>;
pub type CostBreakdown = cost::CostBreakdown<f64>;
