//! Command-line front end for the hierarchical network explorer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use hiernet::alloc::{allocate_with, AllocOptions};
use hiernet::cost::network_cost_raw;
use hiernet::explore::{
    emit_report, emit_skipped, format_float, nic_traffic, run_sweep, write_nic_csv, ReportFormat, SweepConfig,
};
use hiernet::schedule::topology_dims;
use hiernet::{
    build_hierarchical_allreduce, map_parallelism, parse_topology, simulate_iteration, AllocScheme, NetParams,
    Topology, UnitCosts, Workload,
};
use log::info;
use serde_json::json;

#[derive(Parser)]
#[command(name = "hiernet", version, about = "Simulate, price and size multi-dimensional training networks")]
struct Cli {
    /// Log progress to stderr (repeat for more detail)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write report.<csv|json> (plus skipped.<ext> if any pair was skipped)
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's output.path
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's output.format
        #[arg(long)]
        format: Option<ReportFormat>,
    },
    /// Price a topology at the given per-dimension bandwidths
    Cost {
        #[arg(long)]
        topology: String,
        /// Comma-separated GB/s per NPU, innermost dimension first
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        bw: Vec<f64>,
        /// Print the breakdown as JSON
        #[arg(long)]
        json: bool,
    },
    /// Split a bandwidth budget across dimensions and simulate one iteration
    Allocate {
        /// equal, message or smart
        #[arg(long)]
        scheme: AllocScheme,
        #[arg(long)]
        topology: String,
        /// JSON file holding one workload record
        #[arg(long)]
        workload: PathBuf,
        /// Total GB/s per NPU
        #[arg(long)]
        budget: f64,
    },
    /// Per-NPU traffic through the last dimension for every pair in a config, as CSV
    NicTraffic {
        #[arg(long)]
        config: PathBuf,
    },
    /// Dump the hierarchical All-Reduce schedule over every dimension as JSON
    Trace {
        #[arg(long)]
        topology: String,
        /// Payload in bytes
        #[arg(long)]
        bytes: f64,
        #[arg(long, default_value_t = 1)]
        chunks: usize,
    },
}

/// A failure and the exit code it maps to.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

trait OrFail<T> {
    fn config(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrFail<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { config, out, format } => simulate(&config, out, format),
        Command::Cost { topology, bw, json } => cost(&topology, &bw, json),
        Command::Allocate { scheme, topology, workload, budget } => allocate(scheme, &topology, &workload, budget),
        Command::NicTraffic { config } => {
            let cfg = SweepConfig::load(&config).config()?;
            let rows = nic_traffic(&cfg).runtime()?;
            write_nic_csv(&rows, io::stdout().lock()).runtime()
        }
        Command::Trace { topology, bytes, chunks } => trace(&topology, bytes, chunks),
    }
}

fn topology(spec: &str) -> Result<Topology, Failure> {
    parse_topology(spec).with_context(|| format!("topology `{spec}`")).config()
}

fn simulate(config: &Path, out: Option<PathBuf>, format: Option<ReportFormat>) -> Result<(), Failure> {
    let cfg = SweepConfig::load(config).config()?;
    let dir = out.unwrap_or_else(|| cfg.output.path.clone());
    let format = format.unwrap_or(cfg.output.format);
    info!(
        "sweeping {} topologies x {} workloads x {} schemes x {} budgets",
        cfg.topologies.len(),
        cfg.workloads.len(),
        cfg.schemes.len(),
        cfg.budgets.len()
    );
    let result = run_sweep(&cfg).runtime()?;
    for s in &result.skipped {
        eprintln!("skipped {} / {}: {}", s.topology, s.workload, s.reason);
    }
    let report = emit_report(&result.rows, format, &dir).runtime()?;
    println!("wrote {} ({} rows)", report.display(), result.rows.len());
    if let Some(path) = emit_skipped(&result.skipped, format, &dir).runtime()? {
        println!("wrote {} ({} pairs)", path.display(), result.skipped.len());
    }
    Ok(())
}

fn cost(spec: &str, bw: &[f64], as_json: bool) -> Result<(), Failure> {
    let t = topology(spec)?;
    if bw.len() != t.num_dims() {
        return Err(anyhow!("--bw has {} entries but {} has {} dimensions", bw.len(), t.name(), t.num_dims())).config();
    }
    if let Some(b) = bw.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
        return Err(anyhow!("bandwidth must be finite and non-negative, got {b}")).config();
    }
    let c = network_cost_raw(&t, bw, &UnitCosts::default()).runtime()?;
    let mut out = io::stdout().lock();
    if as_json {
        serde_json::to_writer_pretty(&mut out, &c).runtime()?;
        writeln!(out).runtime()?;
        return Ok(());
    }
    for (i, (d, block)) in c.per_dim.iter().zip(t.dims()).enumerate() {
        writeln!(
            out,
            "dim {} {}: link ${} nic ${} switch ${}",
            i + 1,
            block,
            format_float(d.link_cost),
            format_float(d.nic_cost),
            format_float(d.switch_cost)
        )
        .runtime()?;
    }
    writeln!(
        out,
        "total ${} (links ${}, NICs ${}, switches ${})",
        format_float(c.total),
        format_float(c.link_cost()),
        format_float(c.nic_cost()),
        format_float(c.switch_cost())
    )
    .runtime()
}

fn allocate(scheme: AllocScheme, spec: &str, workload: &Path, budget: f64) -> Result<(), Failure> {
    let t = topology(spec)?;
    let text = fs::read_to_string(workload).with_context(|| workload.display().to_string()).config()?;
    let w: Workload = serde_json::from_str(&text).with_context(|| workload.display().to_string()).config()?;
    w.validate().config()?;
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(anyhow!("--budget must be positive, got {budget}")).config();
    }
    let mapping = map_parallelism(&t, &w).with_context(|| format!("{} on {}", w.name, t.name())).config()?;
    let net = NetParams::default();
    let alloc = allocate_with(scheme, &t, &w, &mapping, budget, &AllocOptions::refined(net.clone())).runtime()?;
    let sim = simulate_iteration(&t, &w, &mapping, &alloc, &net).runtime()?;
    let doc = json!({
        "topology": t.name(),
        "workload": w.name,
        "scheme": scheme.to_string(),
        "budget_gbps": budget,
        "per_dim_bw_gbps": alloc.per_dim,
        "iteration_time_s": sim.iteration_time,
        "mp_comm_time_s": sim.mp_comm_time,
        "dp_comm_time_s": sim.dp_comm_time,
        "per_dim_utilization": sim.per_dim_utilization,
        "avg_utilization": sim.avg_bw_utilization,
    });
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &doc).runtime()?;
    writeln!(out).runtime()
}

fn trace(spec: &str, bytes: f64, chunks: usize) -> Result<(), Failure> {
    let t = topology(spec)?;
    if !(bytes > 0.0) || !bytes.is_finite() {
        return Err(anyhow!("--bytes must be positive, got {bytes}")).config();
    }
    if chunks == 0 {
        return Err(anyhow!("--chunks must be at least 1")).config();
    }
    let schedule = build_hierarchical_allreduce(&topology_dims(&t), bytes, chunks).runtime()?;
    println!("{}", schedule.to_json_trace());
    Ok(())
}
