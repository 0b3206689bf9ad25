//! Sweep configuration, runner and reports.

mod config;
mod nic;
mod report;
mod sweep;

pub use config::{OutputSpec, SweepConfig};
pub use nic::{last_dim_traffic, nic_traffic, LastDimTraffic, NicTrafficRow};
pub use report::{
    emit_report, emit_skipped, format_float, read_json_rows, write_csv, write_json, write_nic_csv, ReportFormat,
    CSV_HEADER,
};
pub use sweep::{run_sweep, ReportRow, SkippedRow, SweepResult};

/// The 1,024-NPU sweep over the 2D/3D/4D topologies and three transformer
/// workloads, as JSON.
pub const BASELINE_SWEEP: &str = include_str!("../../configs/baseline_sweep.json");
