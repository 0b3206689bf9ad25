use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::nic::NicTrafficRow;
use super::sweep::{ReportRow, SkippedRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::InvalidParam(format!("unknown report format `{s}` (expected csv or json)"))),
        }
    }
}

pub const CSV_HEADER: [&str; 17] = [
    "topology",
    "workload",
    "scheme",
    "budget_gbps",
    "iteration_time_s",
    "compute_time_s",
    "mp_comm_time_s",
    "dp_comm_time_s",
    "per_dim_bw_gbps",
    "per_dim_utilization",
    "avg_utilization",
    "cost_total",
    "cost_link",
    "cost_nic",
    "cost_switch",
    "perf_per_cost",
    "normalized_time",
];

/// Rounds to 9 significant digits and prints the shortest form of the
/// rounded value.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    format!("{rounded}")
}

fn format_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format_float(*x)).collect::<Vec<_>>().join(";")
}

fn csv_record(r: &ReportRow) -> [String; 17] {
    let f = format_float;
    [
        r.topology.clone(),
        r.workload.clone(),
        r.scheme.clone(),
        f(r.budget_gbps),
        f(r.iteration_time_s),
        f(r.compute_time_s),
        f(r.mp_comm_time_s),
        f(r.dp_comm_time_s),
        format_list(&r.per_dim_bw_gbps),
        format_list(&r.per_dim_utilization),
        f(r.avg_utilization),
        f(r.cost_total),
        f(r.cost_link),
        f(r.cost_nic),
        f(r.cost_switch),
        f(r.perf_per_cost),
        f(r.normalized_time),
    ]
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn check_rows(rows: &[ReportRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::NothingToReport);
    }
    for r in rows {
        let scalars = [
            r.budget_gbps,
            r.iteration_time_s,
            r.compute_time_s,
            r.mp_comm_time_s,
            r.dp_comm_time_s,
            r.avg_utilization,
            r.cost_total,
            r.cost_link,
            r.cost_nic,
            r.cost_switch,
            r.perf_per_cost,
            r.normalized_time,
        ];
        let all = scalars.iter().chain(&r.per_dim_bw_gbps).chain(&r.per_dim_utilization);
        if all.clone().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "non-finite value in row {} / {} / {}",
                r.topology, r.workload, r.scheme
            )));
        }
    }
    Ok(())
}

pub fn write_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    check_rows(rows)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record(csv_record(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(rows: &[ReportRow], mut out: W) -> Result<()> {
    check_rows(rows)?;
    serde_json::to_writer_pretty(&mut out, rows).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

pub fn read_json_rows(text: &str) -> Result<Vec<ReportRow>> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))
}

/// Writes `report.<ext>` into `dir`, creating it if needed.
pub fn emit_report(rows: &[ReportRow], format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    check_rows(rows)?;
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("report.{}", format.extension()));
    let mut out = BufWriter::new(File::create(&path)?);
    match format {
        ReportFormat::Csv => write_csv(rows, &mut out)?,
        ReportFormat::Json => write_json(rows, &mut out)?,
    }
    out.flush()?;
    Ok(path)
}

/// Writes `skipped.<ext>`; nothing is written for an empty list.
pub fn emit_skipped(skipped: &[SkippedRow], format: ReportFormat, dir: &Path) -> Result<Option<PathBuf>> {
    if skipped.is_empty() {
        return Ok(None);
    }
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("skipped.{}", format.extension()));
    let mut out = BufWriter::new(File::create(&path)?);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for s in skipped {
                w.serialize(s).map_err(csv_err)?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, skipped).map_err(|e| Error::Io(e.to_string()))?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(Some(path))
}

pub fn write_nic_csv<W: Write>(rows: &[NicTrafficRow], out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::NothingToReport);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["topology", "workload", "dims", "last_dim_bytes", "last_dim_dp_bytes", "nic_multiplier"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.topology.clone(),
            r.workload.clone(),
            r.dims.to_string(),
            format_float(r.last_dim_bytes),
            format_float(r.last_dim_dp_bytes),
            format_float(r.nic_multiplier),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
