//! Training workloads and how their model/data parallelism lands on the
//! dimensions of a topology.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::topology::Topology;

fn default_bytes_per_param<F: Scalar>() -> F {
    F::lit(2.0)
}

/// Per-iteration description of a training job.
///
/// `mp_comm_bytes` and `compute_time` have no closed form here; they are
/// calibration inputs supplied by the user. `dp_comm_bytes` falls back to
/// `params * bytes_per_param` when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload<F: Scalar> {
    pub name: String,
    pub params: u64,
    pub mp_size: usize,
    pub dp_size: usize,
    #[serde(default = "default_bytes_per_param")]
    pub bytes_per_param: F,
    #[serde(default)]
    pub mp_comm_bytes: F,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp_comm_bytes: Option<F>,
    pub compute_time: F,
}

impl<F: Scalar> Workload<F> {
    /// Pure data-parallel workload with the default gradient volume.
    pub fn data_parallel(name: &str, params: u64, dp_size: usize, compute_time: F) -> Self {
        Workload {
            name: name.to_string(),
            params,
            mp_size: 1,
            dp_size,
            bytes_per_param: default_bytes_per_param(),
            mp_comm_bytes: F::zero(),
            dp_comm_bytes: None,
            compute_time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidWorkload { name: self.name.clone(), msg: msg.to_string() });
        if self.mp_size == 0 || self.dp_size == 0 {
            return bad("mp_size and dp_size must be at least 1");
        }
        let finite_nonneg = |x: F| x.is_finite() && x >= F::zero();
        if !finite_nonneg(self.bytes_per_param) {
            return bad("bytes_per_param must be finite and non-negative");
        }
        if !finite_nonneg(self.mp_comm_bytes) || !self.dp_comm_bytes.is_none_or(finite_nonneg) {
            return bad("communication volumes must be finite and non-negative");
        }
        if !finite_nonneg(self.compute_time) {
            return bad("compute_time must be finite and non-negative");
        }
        if self.mp_size == 1 && self.mp_comm_bytes > F::zero() {
            return bad("mp_size 1 cannot carry MP traffic");
        }
        Ok(())
    }

    pub fn npus(&self) -> usize {
        self.mp_size * self.dp_size
    }

    /// `(M_MP, M_DP)`: payload bytes per NPU of the MP and DP All-Reduce.
    pub fn comm_volumes(&self) -> (F, F) {
        let dp = self
            .dp_comm_bytes
            .unwrap_or_else(|| F::from_u64(self.params).unwrap_or_else(F::infinity) * self.bytes_per_param);
        (self.mp_comm_bytes, dp)
    }

    /// Same payloads scaled, e.g. for linearity checks.
    pub fn scaled_params(&self, factor: u64) -> Self {
        let mut w = self.clone();
        w.params *= factor;
        w.dp_comm_bytes = w.dp_comm_bytes.map(|b| b * F::from_u64(factor).unwrap_or_else(F::infinity));
        w
    }
}

pub fn comm_volumes<F: Scalar>(w: &Workload<F>) -> (F, F) {
    w.comm_volumes()
}

/// A dimension (1-based) used by one parallelism group with a given factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimShare {
    pub dim: usize,
    pub factor: usize,
}

/// The one dimension split between MP (low-order factor) and DP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedDim {
    pub dim: usize,
    pub mp_factor: usize,
    pub dp_factor: usize,
}

/// Assignment of MP and DP onto topology dimensions.
///
/// MP always occupies a prefix starting at Dim 1, DP the remaining suffix.
/// `mp_dims` and `dp_dims` only list dimensions used in full; a shared
/// dimension appears solely in `shared`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelismMapping {
    pub mp_dims: Vec<DimShare>,
    pub dp_dims: Vec<DimShare>,
    pub shared: Option<SharedDim>,
}

impl ParallelismMapping {
    /// MP collective groups in ascending dimension order, shared factor last.
    pub fn mp_groups(&self) -> Vec<DimShare> {
        let mut g = self.mp_dims.clone();
        if let Some(s) = self.shared {
            g.push(DimShare { dim: s.dim, factor: s.mp_factor });
        }
        g
    }

    /// DP collective groups in ascending dimension order, shared factor first.
    pub fn dp_groups(&self) -> Vec<DimShare> {
        let mut g = Vec::with_capacity(self.dp_dims.len() + 1);
        if let Some(s) = self.shared {
            g.push(DimShare { dim: s.dim, factor: s.dp_factor });
        }
        g.extend_from_slice(&self.dp_dims);
        g
    }

    pub fn mp_size(&self) -> usize {
        self.mp_groups().iter().map(|d| d.factor).product()
    }

    pub fn dp_size(&self) -> usize {
        self.dp_groups().iter().map(|d| d.factor).product()
    }
}

/// Packs MP into the lowest dimensions and DP into the rest.
pub fn map_parallelism<F: Scalar>(t: &Topology, w: &Workload<F>) -> Result<ParallelismMapping> {
    w.validate()?;
    let npus = t.npu_count();
    if w.npus() != npus {
        return Err(Error::SizeMismatch { mp: w.mp_size, dp: w.dp_size, product: w.npus(), npus });
    }
    let mut mapping = ParallelismMapping { mp_dims: Vec::new(), dp_dims: Vec::new(), shared: None };
    let mut remaining = w.mp_size;
    for (i, block) in t.dims().iter().enumerate() {
        let dim = i + 1;
        let size = block.size;
        if remaining == 1 {
            mapping.dp_dims.push(DimShare { dim, factor: size });
        } else if remaining.is_multiple_of(size) {
            mapping.mp_dims.push(DimShare { dim, factor: size });
            remaining /= size;
        } else if remaining < size && size % remaining == 0 {
            mapping.shared = Some(SharedDim { dim, mp_factor: remaining, dp_factor: size / remaining });
            remaining = 1;
        } else {
            return Err(Error::Indivisible { mp: w.mp_size, dim, size });
        }
    }
    debug_assert_eq!(remaining, 1);
    Ok(mapping)
}
