//! Topology-aware collective schedules.
//!
//! Each dimension runs the congestion-free basic algorithm matching its
//! block (Ring on rings, Direct on fully-connected groups, halving-doubling
//! behind a switch). A hierarchical All-Reduce over N dimensions is
//! Reduce-Scatter on Dim 1..N followed by All-Gather on Dim N..1.
//!
//! Byte counts are per NPU. A Reduce-Scatter stage takes the buffer the
//! NPU currently holds and leaves it with one `1/P` shard; an All-Gather
//! stage takes that shard and restores the `P`-times larger buffer. Both
//! directions therefore move `buffer * (P-1)/P` bytes per NPU, where
//! `buffer` is the larger of the stage's input and output.

mod dataflow;

pub use dataflow::{check_schedule_dataflow, verify_schedule_dataflow, DataflowFailure};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::topology::{BlockKind, DimBlock, Topology};
use crate::workload::DimShare;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StageKind {
    ReduceScatter,
    AllGather,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Algorithm {
    Ring,
    Direct,
    HalvingDoubling,
}

impl Algorithm {
    pub fn for_block(kind: BlockKind) -> Self {
        match kind {
            BlockKind::Ring => Algorithm::Ring,
            BlockKind::FullyConnected => Algorithm::Direct,
            BlockKind::Switch => Algorithm::HalvingDoubling,
        }
    }

    /// Number of synchronous steps on a group of `p` NPUs.
    pub fn step_count(self, p: usize) -> usize {
        match self {
            Algorithm::Ring => p - 1,
            Algorithm::Direct => 1,
            Algorithm::HalvingDoubling => p.trailing_zeros() as usize,
        }
    }
}

/// One synchronous step: what every NPU of the group sends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Step<F: Scalar> {
    /// Total bytes sent by each NPU in this step, over all its transfers.
    pub bytes_per_npu: F,
    pub concurrent_transfers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage<F: Scalar> {
    pub kind: StageKind,
    /// 1-based topology dimension.
    pub dim_index: usize,
    pub block: BlockKind,
    pub group_size: usize,
    pub algorithm: Algorithm,
    pub input_bytes: F,
    pub steps: Vec<Step<F>>,
}

impl<F: Scalar> Stage<F> {
    pub fn output_bytes(&self) -> F {
        let p = F::count(self.group_size);
        match self.kind {
            StageKind::ReduceScatter => self.input_bytes / p,
            StageKind::AllGather => self.input_bytes * p,
        }
    }

    pub fn bytes_sent(&self) -> F {
        self.steps.iter().map(|s| s.bytes_per_npu).sum()
    }
}

/// A group of NPUs taking part in one level of a hierarchical collective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CollectiveDim {
    pub dim_index: usize,
    pub group_size: usize,
    pub block: BlockKind,
}

impl CollectiveDim {
    pub fn new(dim_index: usize, block: DimBlock) -> Self {
        CollectiveDim { dim_index, group_size: block.size, block: block.kind }
    }
}

/// One level per topology dimension, in order.
pub fn topology_dims(t: &Topology) -> Vec<CollectiveDim> {
    t.dims().iter().enumerate().map(|(i, b)| CollectiveDim::new(i + 1, *b)).collect()
}

/// Levels for a parallelism group; factors may be smaller than the
/// dimension when the dimension is shared.
pub fn group_dims(t: &Topology, groups: &[DimShare]) -> Vec<CollectiveDim> {
    groups
        .iter()
        .map(|g| CollectiveDim {
            dim_index: g.dim,
            group_size: g.factor,
            block: t.dim(g.dim).map(|b| b.kind).unwrap_or(BlockKind::Ring),
        })
        .collect()
}

/// Builds one Reduce-Scatter or All-Gather stage with the block's algorithm.
pub fn build_basic_stage<F: Scalar>(kind: StageKind, level: CollectiveDim, input_bytes: F) -> Result<Stage<F>> {
    let p = level.group_size;
    if p < 2 {
        return Err(Error::GroupTooSmall(p));
    }
    let algorithm = Algorithm::for_block(level.block);
    if algorithm == Algorithm::HalvingDoubling && !p.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(p));
    }
    if !(input_bytes > F::zero()) || !input_bytes.is_finite() {
        return Err(Error::InvalidParam(format!("stage input must be positive, got {input_bytes}")));
    }
    let pf = F::count(p);
    let two = F::lit(2.0);
    let steps = match (algorithm, kind) {
        (Algorithm::Ring, StageKind::ReduceScatter) => {
            vec![Step { bytes_per_npu: input_bytes / pf, concurrent_transfers: 1 }; p - 1]
        }
        (Algorithm::Ring, StageKind::AllGather) => {
            vec![Step { bytes_per_npu: input_bytes, concurrent_transfers: 1 }; p - 1]
        }
        (Algorithm::Direct, StageKind::ReduceScatter) => {
            vec![Step { bytes_per_npu: input_bytes * (pf - F::one()) / pf, concurrent_transfers: p - 1 }]
        }
        (Algorithm::Direct, StageKind::AllGather) => {
            vec![Step { bytes_per_npu: input_bytes * (pf - F::one()), concurrent_transfers: p - 1 }]
        }
        (Algorithm::HalvingDoubling, StageKind::ReduceScatter) => {
            let mut b = input_bytes;
            (0..algorithm.step_count(p))
                .map(|_| {
                    b = b / two;
                    Step { bytes_per_npu: b, concurrent_transfers: 1 }
                })
                .collect()
        }
        (Algorithm::HalvingDoubling, StageKind::AllGather) => {
            let mut b = input_bytes;
            (0..algorithm.step_count(p))
                .map(|_| {
                    let s = Step { bytes_per_npu: b, concurrent_transfers: 1 };
                    b = b * two;
                    s
                })
                .collect()
        }
    };
    Ok(Stage { kind, dim_index: level.dim_index, block: level.block, group_size: p, algorithm, input_bytes, steps })
}

/// Stages for one chunk of a hierarchical All-Reduce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollectiveSchedule<F: Scalar> {
    /// Stages run by every chunk; byte counts are per chunk.
    pub stages: Vec<Stage<F>>,
    pub total_bytes: F,
    pub chunks: usize,
}

impl<F: Scalar> CollectiveSchedule<F> {
    pub fn chunk_bytes(&self) -> F {
        self.total_bytes / F::count(self.chunks)
    }

    /// Levels in Reduce-Scatter order.
    pub fn levels(&self) -> Vec<CollectiveDim> {
        self.stages
            .iter()
            .take_while(|s| s.kind == StageKind::ReduceScatter)
            .map(|s| CollectiveDim { dim_index: s.dim_index, group_size: s.group_size, block: s.block })
            .collect()
    }

    pub fn npu_count(&self) -> usize {
        self.levels().iter().map(|l| l.group_size).product()
    }

    /// Bytes each NPU sends per topology dimension, summed over all chunks.
    /// Indexed by `dim_index - 1`; `len` is the topology dimension count.
    pub fn bytes_per_dim(&self, len: usize) -> Vec<F> {
        let mut out = vec![F::zero(); len];
        let chunks = F::count(self.chunks);
        for s in &self.stages {
            if let Some(slot) = out.get_mut(s.dim_index - 1) {
                *slot = *slot + s.bytes_sent() * chunks;
            }
        }
        out
    }

    pub fn to_json_trace(&self) -> String
    where
        F: Serialize,
    {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }
}

/// Reduce-Scatter up the levels, then All-Gather back down.
pub fn build_hierarchical_allreduce<F: Scalar>(
    levels: &[CollectiveDim],
    total_bytes: F,
    chunks: usize,
) -> Result<CollectiveSchedule<F>> {
    if levels.is_empty() {
        return Err(Error::InvalidParam("hierarchical All-Reduce needs at least one level".into()));
    }
    if chunks == 0 {
        return Err(Error::InvalidParam("chunk count must be at least 1".into()));
    }
    let chunk = total_bytes / F::count(chunks);
    let mut stages = Vec::with_capacity(2 * levels.len());
    let mut buffer = chunk;
    for &level in levels {
        let stage = build_basic_stage(StageKind::ReduceScatter, level, buffer)?;
        buffer = stage.output_bytes();
        stages.push(stage);
    }
    for &level in levels.iter().rev() {
        let stage = build_basic_stage(StageKind::AllGather, level, buffer)?;
        buffer = stage.output_bytes();
        stages.push(stage);
    }
    Ok(CollectiveSchedule { stages, total_bytes, chunks })
}

/// `M(k)`: bytes each NPU sends through each level over a whole
/// All-Reduce of `total_bytes`, both directions included.
pub fn per_dim_traffic<F: Scalar>(levels: &[CollectiveDim], total_bytes: F) -> Vec<F> {
    let two = F::lit(2.0);
    let mut buffer = total_bytes;
    levels
        .iter()
        .map(|l| {
            let p = F::count(l.group_size);
            let m = two * buffer * (p - F::one()) / p;
            buffer = buffer / p;
            m
        })
        .collect()
}
