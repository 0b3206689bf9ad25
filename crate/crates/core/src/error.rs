use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("topology syntax error at byte {pos}: {msg}")]
    TopologySyntax { pos: usize, msg: String },

    #[error("unknown building block `{0}` (expected Ring, FC, FullyConnected or Switch)")]
    UnknownBlock(String),

    #[error("dimension size {0} is invalid: every dimension needs at least 2 NPUs")]
    DimTooSmall(usize),

    #[error("topology has {got} dimensions, limit is {max}")]
    TooManyDims { got: usize, max: usize },

    #[error("topology must have at least one dimension")]
    EmptyTopology,

    #[error("group size {0} cannot run halving-doubling (needs a power of two)")]
    NotPowerOfTwo(usize),

    #[error("collective group size {0} is below 2")]
    GroupTooSmall(usize),

    #[error("invalid workload `{name}`: {msg}")]
    InvalidWorkload { name: String, msg: String },

    #[error("MP size {mp} x DP size {dp} = {product} does not match {npus} NPUs")]
    SizeMismatch { mp: usize, dp: usize, product: usize, npus: usize },

    #[error("MP size {mp} cannot be split across dim {dim} of size {size}")]
    Indivisible { mp: usize, dim: usize, size: usize },

    #[error("bandwidth must be positive and finite, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("bandwidth budget must be positive and finite, got {0}")]
    NonPositiveBudget(f64),

    #[error("allocation has {alloc} dimensions but topology has {topo}")]
    DimMismatch { alloc: usize, topo: usize },

    #[error("bandwidth allocation sums to {sum}, expected budget {budget}")]
    BudgetViolation { sum: f64, budget: f64 },

    #[error("every message size is zero; proportional split is undefined")]
    AllZeroMessages,

    #[error("invalid shared-dimension ratios r_mp={r_mp}, r_dp={r_dp}")]
    InvalidRatios { r_mp: f64, r_dp: f64 },

    #[error("solver failed to converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("schedule does not cover dim {dim} required by the allocation")]
    MissingDim { dim: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("nothing to report")]
    NothingToReport,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
