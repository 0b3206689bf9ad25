//! Analytical network backend.
//!
//! Every transfer costs `link_latency * hops + bytes / bandwidth`. Each
//! dimension is a single serial resource: chunk-stages queued on it run one
//! at a time in FIFO order, and a chunk moves to its next stage as soon as
//! the previous one finishes. MP and DP collectives of one iteration run
//! back to back.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{approx_eq_rel, Scalar, BYTES_PER_GB};
use crate::schedule::{build_hierarchical_allreduce, group_dims, CollectiveSchedule, Stage};
use crate::topology::{BlockKind, Topology};
use crate::workload::{ParallelismMapping, Workload};

/// Hops a single transfer traverses, per building block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopCounts {
    #[serde(rename = "Ring")]
    pub ring: usize,
    #[serde(rename = "FC", alias = "FullyConnected")]
    pub fully_connected: usize,
    #[serde(rename = "Switch")]
    pub switch: usize,
}

impl Default for HopCounts {
    fn default() -> Self {
        HopCounts { ring: 1, fully_connected: 1, switch: 2 }
    }
}

impl HopCounts {
    pub fn for_block(&self, kind: BlockKind) -> usize {
        match kind {
            BlockKind::Ring => self.ring,
            BlockKind::FullyConnected => self.fully_connected,
            BlockKind::Switch => self.switch,
        }
    }
}

fn default_latency<F: Scalar>() -> F {
    F::lit(500e-9)
}

fn default_chunks() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetParams<F: Scalar> {
    /// Seconds per hop.
    #[serde(default = "default_latency")]
    pub link_latency: F,
    #[serde(default)]
    pub hops: HopCounts,
    #[serde(default = "default_chunks")]
    pub chunks: usize,
}

impl<F: Scalar> Default for NetParams<F> {
    fn default() -> Self {
        NetParams { link_latency: default_latency(), hops: HopCounts::default(), chunks: default_chunks() }
    }
}

impl<F: Scalar> NetParams<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.link_latency >= F::zero()) || !self.link_latency.is_finite() {
            return Err(Error::InvalidParam(format!("link_latency must be >= 0, got {}", self.link_latency)));
        }
        if self.chunks == 0 {
            return Err(Error::InvalidParam("chunks must be at least 1".into()));
        }
        let h = self.hops;
        if h.ring == 0 || h.fully_connected == 0 || h.switch == 0 {
            return Err(Error::InvalidParam("hop counts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn without_latency(&self) -> Self {
        NetParams { link_latency: F::zero(), ..self.clone() }
    }
}

/// Per-NPU bandwidth (GB/s) given to each dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BwAllocation<F: Scalar> {
    pub per_dim: Vec<F>,
    pub budget: F,
}

impl<F: Scalar> BwAllocation<F> {
    /// Checks positivity and that the entries add up to the budget.
    pub fn new(per_dim: Vec<F>, budget: F) -> Result<Self> {
        if !(budget > F::zero()) || !budget.is_finite() {
            return Err(Error::NonPositiveBudget(budget.as_f64()));
        }
        if let Some(b) = per_dim.iter().find(|b| !(**b > F::zero()) || !b.is_finite()) {
            return Err(Error::NonPositiveBandwidth(b.as_f64()));
        }
        let sum: F = per_dim.iter().copied().sum();
        let tol = F::lit(1e-9).max(F::epsilon() * F::count(4 * per_dim.len().max(1)));
        if !approx_eq_rel(sum, budget, tol) {
            return Err(Error::BudgetViolation { sum: sum.as_f64(), budget: budget.as_f64() });
        }
        Ok(BwAllocation { per_dim, budget })
    }

    /// Allocation whose budget is whatever the entries add up to.
    pub fn from_dims(per_dim: Vec<F>) -> Result<Self> {
        let budget = per_dim.iter().copied().sum();
        Self::new(per_dim, budget)
    }

    pub fn num_dims(&self) -> usize {
        self.per_dim.len()
    }

    pub fn scaled(&self, factor: F) -> Self {
        BwAllocation { per_dim: self.per_dim.iter().map(|b| *b * factor).collect(), budget: self.budget * factor }
    }
}

/// `link_latency * hops + bytes / bandwidth`, bandwidth in GB/s.
pub fn transfer_time<F: Scalar>(bytes: F, bandwidth_gbps: F, hops: usize, link_latency: F) -> Result<F> {
    if !(bandwidth_gbps > F::zero()) || !bandwidth_gbps.is_finite() {
        return Err(Error::NonPositiveBandwidth(bandwidth_gbps.as_f64()));
    }
    Ok(link_latency * F::count(hops) + bytes / (bandwidth_gbps * F::lit(BYTES_PER_GB)))
}

/// Time for one chunk to clear a stage at the given per-NPU bandwidth.
pub fn stage_duration<F: Scalar>(stage: &Stage<F>, bandwidth_gbps: F, params: &NetParams<F>) -> Result<F> {
    let hops = params.hops.for_block(stage.block);
    stage.steps.iter().map(|s| transfer_time(s.bytes_per_npu, bandwidth_gbps, hops, params.link_latency)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommReport<F: Scalar> {
    pub comm_time: F,
    /// Indexed by `dim - 1`, one entry per allocation dimension.
    pub per_dim_busy: Vec<F>,
    pub per_dim_bytes: Vec<F>,
}

impl<F: Scalar> CommReport<F> {
    fn idle(dims: usize) -> Self {
        CommReport { comm_time: F::zero(), per_dim_busy: vec![F::zero(); dims], per_dim_bytes: vec![F::zero(); dims] }
    }
}

/// Runs all chunks of a schedule through the per-dimension FIFO resources.
pub fn simulate_collective<F: Scalar>(
    schedule: &CollectiveSchedule<F>,
    alloc: &BwAllocation<F>,
    params: &NetParams<F>,
) -> Result<CommReport<F>> {
    let dims = alloc.num_dims();
    let mut report = CommReport::idle(dims);
    let mut durations = Vec::with_capacity(schedule.stages.len());
    for s in &schedule.stages {
        let bw = *alloc.per_dim.get(s.dim_index.wrapping_sub(1)).ok_or(Error::MissingDim { dim: s.dim_index })?;
        durations.push(stage_duration(s, bw, params)?);
    }
    let n_stages = schedule.stages.len();
    if n_stages == 0 {
        return Ok(report);
    }
    let res = |stage: usize| schedule.stages[stage].dim_index - 1;

    struct Running<F> {
        end: F,
        chunk: usize,
        stage: usize,
    }
    // (chunk, stage, ready time)
    let mut queues: Vec<VecDeque<(usize, usize, F)>> = vec![VecDeque::new(); dims];
    let mut running: Vec<Option<Running<F>>> = (0..dims).map(|_| None).collect();
    let mut free_at = vec![F::zero(); dims];
    for c in 0..schedule.chunks {
        queues[res(0)].push_back((c, 0, F::zero()));
    }

    let tol = F::lit(1e-9).max(F::epsilon() * F::lit(64.0));
    let mut now = F::zero();
    loop {
        for d in 0..dims {
            if running[d].is_none() {
                if let Some((chunk, stage, ready)) = queues[d].pop_front() {
                    let start = ready.max(free_at[d]);
                    let end = start + durations[stage];
                    report.per_dim_busy[d] = report.per_dim_busy[d] + durations[stage];
                    report.per_dim_bytes[d] = report.per_dim_bytes[d] + schedule.stages[stage].bytes_sent();
                    running[d] = Some(Running { end, chunk, stage });
                }
            }
        }
        let Some(t) = running.iter().flatten().map(|r| r.end).reduce(F::min) else {
            break;
        };
        now = now.max(t);
        // completions within rounding of `t` count as simultaneous
        let mut done: Vec<(usize, usize, F)> = Vec::new();
        for d in 0..dims {
            if running[d].as_ref().is_some_and(|r| r.end <= t + tol * t.abs()) {
                let r = running[d].take().unwrap_or_else(|| unreachable!());
                free_at[d] = r.end;
                now = now.max(r.end);
                done.push((r.chunk, r.stage, r.end));
            }
        }
        done.sort_by_key(|a| (a.0, a.1));
        for (chunk, stage, end) in done {
            if stage + 1 < n_stages {
                queues[res(stage + 1)].push_back((chunk, stage + 1, end));
            }
        }
    }
    report.comm_time = now;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport<F: Scalar> {
    pub iteration_time: F,
    pub compute_time: F,
    pub mp_comm_time: F,
    pub dp_comm_time: F,
    /// Bandwidth-weighted busy fraction over the communication window.
    pub avg_bw_utilization: F,
    pub per_dim_utilization: Vec<F>,
    pub per_dim_busy: Vec<F>,
    pub per_dim_bytes: Vec<F>,
}

impl<F: Scalar> SimReport<F> {
    pub fn comm_time(&self) -> F {
        self.mp_comm_time + self.dp_comm_time
    }
}

/// MP and DP schedules of one iteration.
pub type PhaseSchedules<F> = (Option<CollectiveSchedule<F>>, Option<CollectiveSchedule<F>>);

/// Hierarchical All-Reduce schedules for the MP and DP phases, `None`
/// where a phase carries no traffic.
pub fn phase_schedules<F: Scalar>(
    t: &Topology,
    w: &Workload<F>,
    mapping: &ParallelismMapping,
    chunks: usize,
) -> Result<PhaseSchedules<F>> {
    let (m_mp, m_dp) = w.comm_volumes();
    let build = |groups: Vec<_>, bytes: F| -> Result<Option<CollectiveSchedule<F>>> {
        if groups.is_empty() || !(bytes > F::zero()) {
            return Ok(None);
        }
        build_hierarchical_allreduce(&group_dims(t, &groups), bytes, chunks).map(Some)
    };
    Ok((build(mapping.mp_groups(), m_mp)?, build(mapping.dp_groups(), m_dp)?))
}

pub fn simulate_iteration<F: Scalar>(
    t: &Topology,
    w: &Workload<F>,
    mapping: &ParallelismMapping,
    alloc: &BwAllocation<F>,
    params: &NetParams<F>,
) -> Result<SimReport<F>> {
    params.validate()?;
    let n = t.num_dims();
    if alloc.num_dims() != n {
        return Err(Error::DimMismatch { alloc: alloc.num_dims(), topo: n });
    }
    if mapping.mp_size() * mapping.dp_size() != t.npu_count() {
        return Err(Error::SizeMismatch {
            mp: mapping.mp_size(),
            dp: mapping.dp_size(),
            product: mapping.mp_size() * mapping.dp_size(),
            npus: t.npu_count(),
        });
    }
    let (mp_sched, dp_sched) = phase_schedules(t, w, mapping, params.chunks)?;
    let run = |s: &Option<CollectiveSchedule<F>>| match s {
        Some(s) => simulate_collective(s, alloc, params),
        None => Ok(CommReport::idle(n)),
    };
    let mp = run(&mp_sched)?;
    let dp = run(&dp_sched)?;

    let comm = mp.comm_time + dp.comm_time;
    let per_dim_busy: Vec<F> = mp.per_dim_busy.iter().zip(&dp.per_dim_busy).map(|(a, b)| *a + *b).collect();
    let per_dim_bytes: Vec<F> = mp.per_dim_bytes.iter().zip(&dp.per_dim_bytes).map(|(a, b)| *a + *b).collect();
    let (per_dim_utilization, avg) = if comm > F::zero() {
        let util: Vec<F> = per_dim_busy.iter().map(|b| (*b / comm).min(F::one())).collect();
        let weighted: F = alloc.per_dim.iter().zip(&per_dim_busy).map(|(bw, b)| *bw * *b).sum();
        (util, (weighted / (alloc.budget * comm)).min(F::one()))
    } else {
        (vec![F::zero(); n], F::zero())
    };
    Ok(SimReport {
        iteration_time: w.compute_time + comm,
        compute_time: w.compute_time,
        mp_comm_time: mp.comm_time,
        dp_comm_time: dp.comm_time,
        avg_bw_utilization: avg,
        per_dim_utilization,
        per_dim_busy,
        per_dim_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{build_basic_stage, CollectiveDim, StageKind};
    use crate::topology::parse_topology;
    use crate::workload::map_parallelism;
    use approx::assert_relative_eq;

    const MB: f64 = 1e6;

    fn lvl(dim: usize, kind: BlockKind, p: usize) -> CollectiveDim {
        CollectiveDim { dim_index: dim, group_size: p, block: kind }
    }

    fn no_latency() -> NetParams<f64> {
        NetParams { link_latency: 0.0, ..NetParams::default() }
    }

    #[test]
    fn transfer_time_cases() {
        assert_relative_eq!(transfer_time(1e9, 1.0, 1, 0.0).unwrap(), 1.0);
        assert_relative_eq!(transfer_time(0.0, 100.0, 2, 500e-9).unwrap(), 1e-6);
        assert_relative_eq!(transfer_time(MB, 100.0, 1, 500e-9).unwrap(), 10.5e-6, max_relative = 1e-12);
        assert!(matches!(transfer_time(1.0, 0.0, 1, 0.0), Err(Error::NonPositiveBandwidth(_))));
        assert!(transfer_time(1.0, -3.0, 1, 0.0).is_err());
    }

    #[test]
    fn stage_durations() {
        let p = NetParams::default();
        let ring = build_basic_stage(StageKind::ReduceScatter, lvl(1, BlockKind::Ring, 4), 4.0 * MB).unwrap();
        assert_relative_eq!(stage_duration(&ring, 100.0, &p).unwrap(), 3.15e-5, max_relative = 1e-12);
        let direct =
            build_basic_stage(StageKind::ReduceScatter, lvl(1, BlockKind::FullyConnected, 4), 4.0 * MB).unwrap();
        assert_relative_eq!(stage_duration(&direct, 100.0, &p).unwrap(), 3.05e-5, max_relative = 1e-12);
        let hd = build_basic_stage(StageKind::ReduceScatter, lvl(1, BlockKind::Switch, 8), 8.0 * MB).unwrap();
        assert_relative_eq!(stage_duration(&hd, 100.0, &no_latency()).unwrap(), 7e-5, max_relative = 1e-12);
        // halving-doubling latency term is log2(P) * hops * alpha
        let with_lat = stage_duration(&hd, 100.0, &p).unwrap();
        assert_relative_eq!(with_lat, 7e-5 + 3.0 * 2.0 * 500e-9, max_relative = 1e-12);
    }

    #[test]
    fn single_chunk_is_sequential() {
        let levels = [lvl(1, BlockKind::Ring, 4), lvl(2, BlockKind::FullyConnected, 2), lvl(3, BlockKind::Switch, 4)];
        let s = build_hierarchical_allreduce(&levels, 64.0 * MB, 1).unwrap();
        let alloc = BwAllocation::new(vec![100.0, 50.0, 25.0], 175.0).unwrap();
        let p = NetParams::default();
        let r = simulate_collective(&s, &alloc, &p).unwrap();
        let sum: f64 = s.stages.iter().map(|st| stage_duration(st, alloc.per_dim[st.dim_index - 1], &p).unwrap()).sum();
        assert_relative_eq!(r.comm_time, sum, max_relative = 1e-12);
    }

    #[test]
    fn two_chunks_on_one_dim() {
        let s = build_hierarchical_allreduce(&[lvl(1, BlockKind::Ring, 4)], 8.0 * MB, 2).unwrap();
        let alloc = BwAllocation::new(vec![100.0], 100.0).unwrap();
        let p = no_latency();
        let d = stage_duration(&s.stages[0], 100.0, &p).unwrap();
        assert_relative_eq!(stage_duration(&s.stages[1], 100.0, &p).unwrap(), d, max_relative = 1e-12);
        let r = simulate_collective(&s, &alloc, &p).unwrap();
        assert_relative_eq!(r.comm_time, 4.0 * d, max_relative = 1e-12);
        assert_relative_eq!(r.per_dim_busy[0], r.comm_time, max_relative = 1e-12);
    }

    #[test]
    fn starved_dim_is_the_bottleneck() {
        // budget 300 GB/s over a 3D ring, Dim 1 starved
        let levels = [lvl(1, BlockKind::Ring, 4), lvl(2, BlockKind::Ring, 4), lvl(3, BlockKind::Ring, 4)];
        let s = build_hierarchical_allreduce(&levels, 64.0 * MB, 4).unwrap();
        let p = no_latency();
        let starved =
            simulate_collective(&s, &BwAllocation::new(vec![20.0, 140.0, 140.0], 300.0).unwrap(), &p).unwrap();
        assert_relative_eq!(starved.per_dim_busy[0] / starved.comm_time, 1.0, max_relative = 1e-9);
        let m = crate::schedule::per_dim_traffic(&levels, 64.0 * MB);
        let total: f64 = m.iter().sum();
        let balanced_bw: Vec<f64> = m.iter().map(|x| 300.0 * x / total).collect();
        let balanced = simulate_collective(&s, &BwAllocation::new(balanced_bw, 300.0).unwrap(), &p).unwrap();
        assert!(balanced.comm_time < starved.comm_time);
        // the well-fed dims sit idle less once the starved one is fixed
        for k in 1..3 {
            let fb = balanced.per_dim_busy[k] / balanced.comm_time;
            let fs = starved.per_dim_busy[k] / starved.comm_time;
            assert!(fb >= fs - 1e-12, "dim {k}: {fb} < {fs}");
        }
    }

    #[test]
    fn missing_dim_is_an_error() {
        let s = build_hierarchical_allreduce(&[lvl(3, BlockKind::Ring, 4)], MB, 1).unwrap();
        let alloc = BwAllocation::new(vec![1.0, 1.0], 2.0).unwrap();
        assert_eq!(simulate_collective(&s, &alloc, &no_latency()), Err(Error::MissingDim { dim: 3 }));
    }

    #[test]
    fn allocation_validation() {
        assert!(BwAllocation::new(vec![100.0, 200.0], 300.0).is_ok());
        assert!(matches!(BwAllocation::new(vec![100.0, 0.0], 100.0), Err(Error::NonPositiveBandwidth(_))));
        assert!(matches!(BwAllocation::new(vec![100.0, 100.0], 300.0), Err(Error::BudgetViolation { .. })));
        assert!(matches!(BwAllocation::new(vec![1.0], 0.0), Err(Error::NonPositiveBudget(_))));
    }

    fn dp_only() -> (Topology, Workload<f64>) {
        let t = parse_topology("Ring(4)_Switch(4)").unwrap();
        (t, Workload::data_parallel("dp", 1_000_000, 16, 0.5))
    }

    #[test]
    fn pure_dp_iteration() {
        let (t, w) = dp_only();
        let m = map_parallelism(&t, &w).unwrap();
        let alloc = BwAllocation::new(vec![50.0, 50.0], 100.0).unwrap();
        let r = simulate_iteration(&t, &w, &m, &alloc, &NetParams::default()).unwrap();
        assert_eq!(r.mp_comm_time, 0.0);
        assert!(r.dp_comm_time > 0.0);
        assert_relative_eq!(r.iteration_time, 0.5 + r.dp_comm_time);
        assert!(r.avg_bw_utilization > 0.0 && r.avg_bw_utilization <= 1.0);
    }

    #[test]
    fn zero_dp_bytes() {
        let t = parse_topology("Ring(4)_Switch(4)").unwrap();
        let w = Workload {
            name: "mp".into(),
            params: 0,
            mp_size: 4,
            dp_size: 4,
            bytes_per_param: 2.0,
            mp_comm_bytes: 1e8,
            dp_comm_bytes: None,
            compute_time: 1.0,
        };
        let m = map_parallelism(&t, &w).unwrap();
        let alloc = BwAllocation::new(vec![80.0, 20.0], 100.0).unwrap();
        let r = simulate_iteration(&t, &w, &m, &alloc, &no_latency()).unwrap();
        assert_eq!(r.dp_comm_time, 0.0);
        assert_eq!(r.per_dim_busy[1], 0.0);
        // MP runs on Dim 1 only: 80 of 100 GB/s is ever busy
        assert_relative_eq!(r.avg_bw_utilization, 0.8, max_relative = 1e-9);
    }

    #[test]
    fn f32_runs_too() {
        let s = build_hierarchical_allreduce(&[lvl(1, BlockKind::Ring, 4)], 4e6f32, 4).unwrap();
        let alloc = BwAllocation::new(vec![100.0f32], 100.0).unwrap();
        let r = simulate_collective(&s, &alloc, &NetParams::default()).unwrap();
        assert!((r.comm_time - 6e-5 - 8.0 * 3.0 * 500e-9).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn levels() -> impl Strategy<Value = Vec<CollectiveDim>> {
            prop::collection::vec(
                (
                    prop_oneof![Just(BlockKind::Ring), Just(BlockKind::FullyConnected), Just(BlockKind::Switch)],
                    prop_oneof![Just(2usize), Just(4), Just(8)],
                ),
                1..=4,
            )
            .prop_map(|v| v.into_iter().enumerate().map(|(i, (k, p))| lvl(i + 1, k, p)).collect())
        }

        fn alloc_for(n: usize) -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(1.0f64..500.0, n)
        }

        proptest! {
            #[test]
            fn netsim_laws(
                (lv, bw) in levels().prop_flat_map(|l| { let n = l.len(); (Just(l), alloc_for(n)) }),
                chunks in 1usize..8,
                lambda in 1.01f64..20.0,
                total in 1e6f64..1e11,
            ) {
                let p = no_latency();
                let alloc = BwAllocation::from_dims(bw.clone()).unwrap();
                let s = build_hierarchical_allreduce(&lv, total, chunks).unwrap();
                let r = simulate_collective(&s, &alloc, &p).unwrap();

                // work conservation with zero latency
                for ((busy, bytes), b) in r.per_dim_busy.iter().zip(&r.per_dim_bytes).zip(&bw) {
                    let expect = bytes / (b * 1e9);
                    prop_assert!((busy - expect).abs() <= 1e-9 * expect.max(1e-30));
                    prop_assert!(*busy <= r.comm_time * (1.0 + 1e-12));
                }
                // bandwidth scaling
                let fast = simulate_collective(&s, &alloc.scaled(lambda), &p).unwrap();
                prop_assert!((fast.comm_time * lambda - r.comm_time).abs() <= 1e-9 * r.comm_time);
                // pipelining never hurts
                let one = build_hierarchical_allreduce(&lv, total, 1).unwrap();
                let r1 = simulate_collective(&one, &alloc, &p).unwrap();
                prop_assert!(r.comm_time <= r1.comm_time * (1.0 + 1e-9));
                // bottleneck bound
                let m = crate::schedule::per_dim_traffic(&lv, total);
                let bound = m.iter().zip(&bw).map(|(m, b)| m / (b * 1e9)).fold(0.0, f64::max);
                prop_assert!(r.comm_time >= bound * (1.0 - 1e-9));
            }
        }
    }
}
