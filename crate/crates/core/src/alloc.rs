//! Splitting a per-NPU bandwidth budget across dimensions.
//!
//! * EqualBW gives every dimension `B / N`.
//! * MessageBW is proportional to the bytes each dimension carries.
//! * SmartBW first splits `B` between the MP and DP phases (which run one
//!   after the other) by the square root of their volumes, then splits each
//!   phase's share proportionally inside the phase. When one dimension
//!   carries both phases, its bandwidth is the larger of the two demands and
//!   the split is found numerically. By default the split is then tuned
//!   against the simulated MP + DP time, since chunk pipelining makes a
//!   phase slower than its busiest dimension alone.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netsim::{phase_schedules, simulate_collective, BwAllocation, NetParams};
use crate::scalar::Scalar;
use crate::schedule::{group_dims, per_dim_traffic};
use crate::topology::Topology;
use crate::workload::{DimShare, ParallelismMapping, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AllocScheme {
    #[serde(rename = "equal", alias = "EqualBW")]
    EqualBw,
    #[serde(rename = "message", alias = "MessageBW")]
    MessageBw,
    #[serde(rename = "smart", alias = "SmartBW")]
    SmartBw,
}

impl AllocScheme {
    pub const ALL: [AllocScheme; 3] = [AllocScheme::EqualBw, AllocScheme::MessageBw, AllocScheme::SmartBw];

    pub fn key(self) -> &'static str {
        match self {
            AllocScheme::EqualBw => "equal",
            AllocScheme::MessageBw => "message",
            AllocScheme::SmartBw => "smart",
        }
    }
}

impl fmt::Display for AllocScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AllocScheme::EqualBw => "EqualBW",
            AllocScheme::MessageBw => "MessageBW",
            AllocScheme::SmartBw => "SmartBW",
        })
    }
}

impl FromStr for AllocScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" | "EqualBW" => Ok(AllocScheme::EqualBw),
            "message" | "MessageBW" => Ok(AllocScheme::MessageBw),
            "smart" | "SmartBW" => Ok(AllocScheme::SmartBw),
            _ => Err(Error::InvalidParam(format!("unknown scheme `{s}` (expected equal, message or smart)"))),
        }
    }
}

/// Fraction of the budget given to a dimension that carries no traffic.
pub const DEFAULT_ZERO_TRAFFIC_FLOOR: f64 = 1e-3;

const GOLDEN_MAX_ITERS: usize = 200;
const GOLDEN_REL_TOL: f64 = 1e-9;

fn check_budget<F: Scalar>(budget: F) -> Result<()> {
    if budget > F::zero() && budget.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveBudget(budget.as_f64()))
    }
}

pub fn equal_bw<F: Scalar>(budget: F, dims: usize) -> Result<BwAllocation<F>> {
    check_budget(budget)?;
    if dims == 0 {
        return Err(Error::EmptyTopology);
    }
    BwAllocation::new(vec![budget / F::count(dims); dims], budget)
}

/// Splits `total` proportionally to `weights`; all-zero weights split
/// evenly. Entries may be zero.
fn proportional<F: Scalar>(total: F, weights: &[F]) -> Vec<F> {
    let sum: F = weights.iter().copied().sum();
    if sum > F::zero() {
        weights.iter().map(|w| *w / sum * total).collect()
    } else {
        vec![total / F::count(weights.len().max(1)); weights.len()]
    }
}

/// Gives zero entries `floor * budget` and shrinks the rest to match.
fn apply_floor<F: Scalar>(mut bw: Vec<F>, budget: F, floor: F) -> Vec<F> {
    let zeros = bw.iter().filter(|b| !(**b > F::zero())).count();
    if zeros == 0 || zeros == bw.len() {
        return bw;
    }
    let reserved = budget * floor * F::count(zeros);
    let live: F = bw.iter().copied().filter(|b| *b > F::zero()).sum();
    let scale = (budget - reserved) / live;
    for b in &mut bw {
        *b = if *b > F::zero() { *b * scale } else { budget * floor };
    }
    bw
}

pub fn message_bw<F: Scalar>(budget: F, messages: &[F]) -> Result<BwAllocation<F>> {
    message_bw_with_floor(budget, messages, F::lit(DEFAULT_ZERO_TRAFFIC_FLOOR))
}

pub fn message_bw_with_floor<F: Scalar>(budget: F, messages: &[F], floor: F) -> Result<BwAllocation<F>> {
    check_budget(budget)?;
    if messages.iter().any(|m| !(*m >= F::zero())) {
        return Err(Error::InvalidParam("message sizes must be non-negative".into()));
    }
    let sum: F = messages.iter().copied().sum();
    if !(sum > F::zero()) {
        return Err(Error::AllZeroMessages);
    }
    BwAllocation::new(apply_floor(proportional(budget, messages), budget, floor), budget)
}

/// `M_MP / BW_MP + M_DP / BW_DP`: serialized time of the two phases in
/// seconds-per-GB units.
pub fn sequential_objective<F: Scalar>(m_mp: F, m_dp: F, bw_mp: F, bw_dp: F) -> F {
    let term = |m: F, bw: F| if m > F::zero() { m / bw } else { F::zero() };
    term(m_mp, bw_mp) + term(m_dp, bw_dp)
}

/// Square-root split of the budget between the MP and DP phases.
pub fn smart_bw_unshared<F: Scalar>(budget: F, m_mp: F, m_dp: F) -> Result<(F, F)> {
    check_budget(budget)?;
    if !(m_mp >= F::zero()) || !(m_dp >= F::zero()) {
        return Err(Error::InvalidParam("message sizes must be non-negative".into()));
    }
    let (a, b) = (m_mp.sqrt(), m_dp.sqrt());
    if !(a + b > F::zero()) {
        return Err(Error::AllZeroMessages);
    }
    Ok((a / (a + b) * budget, b / (a + b) * budget))
}

/// Phase bandwidths when one dimension carries both MP and DP traffic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharedSplit<F: Scalar> {
    pub bw_mp: F,
    pub bw_dp: F,
    /// `max(r_mp * bw_mp, r_dp * bw_dp)`.
    pub bw_shared: F,
    pub r_mp: F,
    pub r_dp: F,
}

impl<F: Scalar> SharedSplit<F> {
    pub fn bw_mp_nonshared(&self) -> F {
        (F::one() - self.r_mp) * self.bw_mp
    }

    pub fn bw_dp_nonshared(&self) -> F {
        (F::one() - self.r_dp) * self.bw_dp
    }

    /// Total bandwidth this split consumes.
    pub fn consumed(&self) -> F {
        self.bw_mp_nonshared() + self.bw_dp_nonshared() + self.bw_shared
    }
}

/// Total bandwidth consumed by phase bandwidths `(x, y)` with a shared dim.
pub fn shared_constraint<F: Scalar>(x: F, y: F, r_mp: F, r_dp: F) -> F {
    (F::one() - r_mp) * x + (F::one() - r_dp) * y + (r_mp * x).max(r_dp * y)
}

/// Minimizes the sequential objective under the shared-dimension budget
/// constraint.
///
/// The feasible boundary, written as `y(x)`, has two linear pieces meeting
/// where `r_mp * x == r_dp * y`. Each piece is searched with golden-section
/// and the better optimum wins.
pub fn smart_bw_shared<F: Scalar>(budget: F, m_mp: F, m_dp: F, r_mp: F, r_dp: F) -> Result<SharedSplit<F>> {
    check_budget(budget)?;
    let unit = |r: F| r >= F::zero() && r <= F::one();
    if !unit(r_mp) || !unit(r_dp) {
        return Err(Error::InvalidRatios { r_mp: r_mp.as_f64(), r_dp: r_dp.as_f64() });
    }
    let (zero, one) = (F::zero(), F::one());
    if r_mp == zero && r_dp == zero {
        let (x, y) = smart_bw_unshared(budget, m_mp, m_dp)?;
        return Ok(SharedSplit { bw_mp: x, bw_dp: y, bw_shared: zero, r_mp, r_dp });
    }
    if !(m_mp > zero) || !(m_dp > zero) {
        // one phase is empty: everything goes to the other one
        // with the other phase at zero the constraint collapses to x + y = B
        let (x, y) = smart_bw_unshared(budget, m_mp, m_dp)?;
        return Ok(SharedSplit { bw_mp: x, bw_dp: y, bw_shared: (r_mp * x).max(r_dp * y), r_mp, r_dp });
    }

    // r_mp * x == r_dp * y on the boundary
    let x0 = budget * r_dp / (r_dp + (one - r_dp) * r_mp);
    let objective = |x: F, y: F| sequential_objective(m_mp, m_dp, x, y);
    let mut best: Option<(F, F, F)> = None;
    let mut consider = |x: F, y: F| {
        if x > zero && y > zero {
            let f = objective(x, y);
            if best.is_none_or(|(bf, _, _)| f < bf) {
                best = Some((f, x, y));
            }
        }
    };

    // MP demand dominates on the shared dim
    if r_dp < one && x0 < budget {
        let y_of = |x: F| (budget - x) / (one - r_dp);
        let x = golden_section(|x| objective(x, y_of(x)), x0, budget)?;
        consider(x, y_of(x));
    }
    // DP demand dominates on the shared dim
    if x0 > zero {
        let y_of = |x: F| budget - (one - r_mp) * x;
        let x = golden_section(|x| objective(x, y_of(x)), zero, x0)?;
        consider(x, y_of(x));
    }
    let (_, x, y) = best.ok_or(Error::NoConvergence { iterations: 0 })?;
    let split = SharedSplit { bw_mp: x, bw_dp: y, bw_shared: (r_mp * x).max(r_dp * y), r_mp, r_dp };
    Ok(split)
}

/// Minimizer of a convex function on `[lo, hi]`, to a relative tolerance
/// of the interval scale.
pub fn golden_section<F: Scalar>(f: impl Fn(F) -> F, lo: F, hi: F) -> Result<F> {
    let inv_phi = F::lit((5f64.sqrt() - 1.0) / 2.0);
    let tol = F::lit(GOLDEN_REL_TOL).max(F::epsilon() * F::lit(16.0)) * hi.abs().max(lo.abs());
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_MAX_ITERS {
        if b - a <= tol {
            return Ok((a + b) / F::lit(2.0));
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    Err(Error::NoConvergence { iterations: GOLDEN_MAX_ITERS })
}

/// Per-dimension bytes of each phase, indexed by `dim - 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTraffic<F: Scalar> {
    pub mp: Vec<F>,
    pub dp: Vec<F>,
}

impl<F: Scalar> PhaseTraffic<F> {
    pub fn total(&self) -> Vec<F> {
        self.mp.iter().zip(&self.dp).map(|(a, b)| *a + *b).collect()
    }

    pub fn mp_volume(&self) -> F {
        self.mp.iter().copied().sum()
    }

    pub fn dp_volume(&self) -> F {
        self.dp.iter().copied().sum()
    }
}

fn scatter_traffic<F: Scalar>(t: &Topology, groups: &[DimShare], bytes: F) -> Vec<F> {
    let mut out = vec![F::zero(); t.num_dims()];
    if groups.is_empty() {
        return out;
    }
    for (g, m) in groups.iter().zip(per_dim_traffic(&group_dims(t, groups), bytes)) {
        out[g.dim - 1] = out[g.dim - 1] + m;
    }
    out
}

/// `M(k)` of the MP and DP All-Reduce on every dimension.
pub fn phase_traffic<F: Scalar>(t: &Topology, w: &Workload<F>, mapping: &ParallelismMapping) -> PhaseTraffic<F> {
    let (m_mp, m_dp) = w.comm_volumes();
    PhaseTraffic {
        mp: scatter_traffic(t, &mapping.mp_groups(), m_mp),
        dp: scatter_traffic(t, &mapping.dp_groups(), m_dp),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocOptions<F: Scalar> {
    pub zero_traffic_floor: F,
    /// Network the SmartBW split is tuned against. With `None` SmartBW is
    /// the closed-form split alone.
    pub refine_with: Option<NetParams<F>>,
}

impl<F: Scalar> Default for AllocOptions<F> {
    fn default() -> Self {
        AllocOptions { zero_traffic_floor: F::lit(DEFAULT_ZERO_TRAFFIC_FLOOR), refine_with: Some(NetParams::default()) }
    }
}

impl<F: Scalar> AllocOptions<F> {
    pub fn closed_form() -> Self {
        AllocOptions { refine_with: None, ..Self::default() }
    }

    pub fn refined(net: NetParams<F>) -> Self {
        AllocOptions { refine_with: Some(net), ..Self::default() }
    }
}

pub fn allocate<F: Scalar>(
    scheme: AllocScheme,
    t: &Topology,
    w: &Workload<F>,
    mapping: &ParallelismMapping,
    budget: F,
) -> Result<BwAllocation<F>> {
    allocate_with(scheme, t, w, mapping, budget, &AllocOptions::default())
}

pub fn allocate_with<F: Scalar>(
    scheme: AllocScheme,
    t: &Topology,
    w: &Workload<F>,
    mapping: &ParallelismMapping,
    budget: F,
    opts: &AllocOptions<F>,
) -> Result<BwAllocation<F>> {
    check_budget(budget)?;
    let n = t.num_dims();
    match scheme {
        AllocScheme::EqualBw => equal_bw(budget, n),
        AllocScheme::MessageBw => {
            let traffic = phase_traffic(t, w, mapping);
            message_bw_with_floor(budget, &traffic.total(), opts.zero_traffic_floor)
        }
        AllocScheme::SmartBw => {
            let traffic = phase_traffic(t, w, mapping);
            let (m_mp, m_dp) = (traffic.mp_volume(), traffic.dp_volume());
            if !(m_mp > F::zero()) || !(m_dp > F::zero()) {
                // single phase: proportional is already optimal
                return message_bw_with_floor(budget, &traffic.total(), opts.zero_traffic_floor);
            }
            let shared = mapping.shared.map(|s| s.dim - 1);
            let per_dim = match shared {
                None => {
                    let (bw_mp, bw_dp) = smart_bw_unshared(budget, m_mp, m_dp)?;
                    let mp = proportional(bw_mp, &traffic.mp);
                    let dp = proportional(bw_dp, &traffic.dp);
                    mp.iter().zip(&dp).map(|(a, b)| *a + *b).collect::<Vec<F>>()
                }
                Some(s) => {
                    let r_mp = traffic.mp[s] / m_mp;
                    let r_dp = traffic.dp[s] / m_dp;
                    let split = smart_bw_shared(budget, m_mp, m_dp, r_mp, r_dp)?;
                    let mut mp_ns = traffic.mp.clone();
                    let mut dp_ns = traffic.dp.clone();
                    mp_ns[s] = F::zero();
                    dp_ns[s] = F::zero();
                    let mp = proportional(split.bw_mp_nonshared(), &mp_ns);
                    let dp = proportional(split.bw_dp_nonshared(), &dp_ns);
                    let mut v: Vec<F> = mp.iter().zip(&dp).map(|(a, b)| *a + *b).collect();
                    v[s] = split.bw_shared;
                    v
                }
            };
            let closed = apply_floor(per_dim, budget, opts.zero_traffic_floor);
            let best = match &opts.refine_with {
                None => closed,
                Some(net) => {
                    let message = apply_floor(proportional(budget, &traffic.total()), budget, opts.zero_traffic_floor);
                    let family = PhaseFamily::new(&traffic, shared, budget, opts.zero_traffic_floor);
                    refine_smart(t, w, mapping, net, &family, vec![closed, message])?
                }
            };
            BwAllocation::new(best, budget)
        }
    }
}

/// Allocations that split each phase's share proportionally to its
/// traffic, parameterized by the budget fractions `a` (MP-only dims) and
/// `b` (DP-only dims); the shared dim, if any, gets the rest.
struct PhaseFamily<F: Scalar> {
    mp_only: Vec<F>,
    dp_only: Vec<F>,
    shared: Option<usize>,
    budget: F,
    floor: F,
}

impl<F: Scalar> PhaseFamily<F> {
    fn new(traffic: &PhaseTraffic<F>, shared: Option<usize>, budget: F, floor: F) -> Self {
        let mut mp_only = traffic.mp.clone();
        let mut dp_only = traffic.dp.clone();
        if let Some(s) = shared {
            mp_only[s] = F::zero();
            dp_only[s] = F::zero();
        }
        PhaseFamily { mp_only, dp_only, shared, budget, floor }
    }

    fn has_mp(&self) -> bool {
        self.mp_only.iter().any(|m| *m > F::zero())
    }

    fn has_dp(&self) -> bool {
        self.dp_only.iter().any(|m| *m > F::zero())
    }

    fn point(&self, a: F, b: F) -> Vec<F> {
        let mp = proportional(a * self.budget, &self.mp_only);
        let dp = proportional(b * self.budget, &self.dp_only);
        let mut v: Vec<F> = mp.iter().zip(&dp).map(|(x, y)| *x + *y).collect();
        if let Some(s) = self.shared {
            v[s] = (F::one() - a - b) * self.budget;
        }
        apply_floor(v, self.budget, self.floor)
    }
}

/// Tunes the SmartBW split against the simulated MP + DP time.
///
/// Searches the phase-proportional family and returns the fastest of the
/// search result and the `seeds`.
fn refine_smart<F: Scalar>(
    t: &Topology,
    w: &Workload<F>,
    mapping: &ParallelismMapping,
    net: &NetParams<F>,
    family: &PhaseFamily<F>,
    seeds: Vec<Vec<F>>,
) -> Result<Vec<F>> {
    net.validate()?;
    let (mp, dp) = phase_schedules(t, w, mapping, net.chunks)?;
    let budget = family.budget;
    let time = |bw: &[F]| -> F {
        if bw.iter().any(|b| !(*b > F::zero())) {
            return F::infinity();
        }
        let alloc = BwAllocation { per_dim: bw.to_vec(), budget };
        let mut total = F::zero();
        for s in [&mp, &dp].into_iter().flatten() {
            match simulate_collective(s, &alloc, net) {
                Ok(r) => total = total + r.comm_time,
                Err(_) => return F::infinity(),
            }
        }
        total
    };

    let (zero, one) = (F::zero(), F::one());
    let searched = match (family.shared.is_some(), family.has_mp(), family.has_dp()) {
        (false, _, _) => {
            let a = golden_section(|a| time(&family.point(a, one - a)), zero, one)?;
            Some(family.point(a, one - a))
        }
        (true, true, true) => {
            let inner = |a: F| -> Result<F> { golden_section(|b| time(&family.point(a, b)), zero, one - a) };
            let a = golden_section(|a| inner(a).map_or(F::infinity(), |b| time(&family.point(a, b))), zero, one)?;
            let b = inner(a)?;
            Some(family.point(a, b))
        }
        (true, true, false) => {
            let a = golden_section(|a| time(&family.point(a, zero)), zero, one)?;
            Some(family.point(a, zero))
        }
        (true, false, true) => {
            let b = golden_section(|b| time(&family.point(zero, b)), zero, one)?;
            Some(family.point(zero, b))
        }
        (true, false, false) => None,
    };

    let mut best: Option<(F, Vec<F>)> = None;
    for cand in searched.into_iter().chain(seeds) {
        let t = time(&cand);
        if best.as_ref().is_none_or(|(bt, _)| t < *bt) {
            best = Some((t, cand));
        }
    }
    match best {
        Some((t, bw)) if t.is_finite() => Ok(bw),
        _ => Err(Error::NoConvergence { iterations: 0 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::parse_topology;
    use crate::workload::map_parallelism;
    use approx::assert_relative_eq;

    #[test]
    fn equal_split() {
        assert_eq!(equal_bw(300.0, 3).unwrap().per_dim, vec![100.0; 3]);
        assert_eq!(equal_bw(300.0, 4).unwrap().per_dim, vec![75.0; 4]);
        assert_eq!(equal_bw(100.0, 1).unwrap().per_dim, vec![100.0]);
    }

    #[test]
    fn message_split() {
        assert_eq!(message_bw(300.0, &[100.0, 200.0]).unwrap().per_dim, vec![100.0, 200.0]);
        assert_eq!(message_bw(300.0, &[1.0, 1.0, 1.0]).unwrap().per_dim, vec![100.0; 3]);
        assert_eq!(message_bw(300.0, &[0.0, 0.0]), Err(Error::AllZeroMessages));
    }

    #[test]
    fn message_split_of_three_dim_ring_traffic() {
        use crate::schedule::CollectiveDim;
        use crate::topology::BlockKind;
        let levels: Vec<CollectiveDim> = [4, 2, 2]
            .iter()
            .enumerate()
            .map(|(i, &p)| CollectiveDim { dim_index: i + 1, group_size: p, block: BlockKind::Ring })
            .collect();
        let m = per_dim_traffic(&levels, 16e6);
        let a = message_bw(300.0, &m).unwrap();
        assert_relative_eq!(a.per_dim[0], 240.0, max_relative = 1e-12);
        assert_relative_eq!(a.per_dim[1], 40.0, max_relative = 1e-12);
        assert_relative_eq!(a.per_dim[2], 20.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_traffic_floor() {
        let a = message_bw(100.0, &[3.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(a.per_dim[1], 0.1);
        assert_relative_eq!(a.per_dim[0], 99.9 * 0.75, max_relative = 1e-12);
        assert_relative_eq!(a.per_dim.iter().sum::<f64>(), 100.0, max_relative = 1e-12);
    }

    #[test]
    fn square_root_split() {
        let (mp, dp) = smart_bw_unshared(300.0, 4e9, 1e9).unwrap();
        assert_relative_eq!(mp, 200.0, max_relative = 1e-12);
        assert_relative_eq!(dp, 100.0, max_relative = 1e-12);
        let (mp, dp) = smart_bw_unshared(300.0, 7e9, 7e9).unwrap();
        assert_eq!((mp, dp), (150.0, 150.0));
        assert!(smart_bw_unshared(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn square_root_split_beats_a_grid() {
        let (b, m1, m2) = (300.0, 4e9, 1e9);
        let (mp, dp) = smart_bw_unshared(b, m1, m2).unwrap();
        let best = sequential_objective(m1, m2, mp, dp);
        for i in 1..1000 {
            let x = b * i as f64 / 1000.0;
            assert!(best <= sequential_objective(m1, m2, x, b - x) * (1.0 + 1e-15));
        }
    }

    #[test]
    fn shared_with_zero_ratios_is_unshared() {
        let s = smart_bw_shared(300.0, 4e9, 1e9, 0.0, 0.0).unwrap();
        let (mp, dp) = smart_bw_unshared(300.0, 4e9, 1e9).unwrap();
        assert_eq!((s.bw_mp, s.bw_dp, s.bw_shared), (mp, dp, 0.0));
    }

    #[test]
    fn shared_boundary_ratio() {
        // all MP on the shared dim, no DP there: B = BW_MP + BW_DP again
        let s = smart_bw_shared(300.0, 4e9, 1e9, 1.0, 0.0).unwrap();
        assert_relative_eq!(s.bw_mp, 200.0, max_relative = 1e-7);
        assert_relative_eq!(s.bw_dp, 100.0, max_relative = 1e-7);
        assert_relative_eq!(s.consumed(), 300.0, max_relative = 1e-12);
    }

    #[test]
    fn shared_split_respects_budget() {
        for &(r1, r2) in &[(0.5, 0.5), (0.1, 0.9), (0.9, 0.05), (1.0, 1.0), (0.0, 1.0), (0.3, 0.0)] {
            let s = smart_bw_shared(300.0, 4.0, 4.0, r1, r2).unwrap();
            assert_relative_eq!(s.consumed(), 300.0, max_relative = 1e-9);
            assert_relative_eq!(shared_constraint(s.bw_mp, s.bw_dp, r1, r2), 300.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn shared_rejects_bad_inputs() {
        assert!(matches!(smart_bw_shared(300.0, 1.0, 1.0, 1.5, 0.0), Err(Error::InvalidRatios { .. })));
        assert!(matches!(smart_bw_shared(-1.0, 1.0, 1.0, 0.5, 0.5), Err(Error::NonPositiveBudget(_))));
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(|x: f64| (x - 3.0).powi(2), 0.0, 10.0).unwrap();
        assert!((x - 3.0).abs() < 1e-7);
    }

    fn gpt3() -> Workload<f64> {
        Workload {
            name: "gpt3".into(),
            params: 175_000_000_000,
            mp_size: 16,
            dp_size: 64,
            bytes_per_param: 2.0,
            mp_comm_bytes: 3e11,
            dp_comm_bytes: Some(2.1875e10),
            compute_time: 9.0,
        }
    }

    #[test]
    fn smart_equals_message_for_pure_dp() {
        let t = parse_topology("Ring(8)_FC(8)_Switch(16)").unwrap();
        let w = Workload::data_parallel("t17b", 17_000_000_000, 1024, 1.0);
        let m = map_parallelism(&t, &w).unwrap();
        let smart = allocate(AllocScheme::SmartBw, &t, &w, &m, 300.0).unwrap();
        let msg = allocate(AllocScheme::MessageBw, &t, &w, &m, 300.0).unwrap();
        assert_eq!(smart, msg);
    }

    #[test]
    fn equal_allocation_ignores_workload() {
        let t = parse_topology("Ring(8)_FC(8)_Switch(16)").unwrap();
        let w = gpt3();
        let m = map_parallelism(&t, &w).unwrap();
        assert_eq!(allocate(AllocScheme::EqualBw, &t, &w, &m, 300.0).unwrap().per_dim, vec![100.0; 3]);
    }

    #[test]
    fn message_allocation_is_phase_agnostic() {
        let t = parse_topology("Ring(2)_FC(8)_Ring(8)_Switch(8)").unwrap();
        let w = gpt3();
        let m = map_parallelism(&t, &w).unwrap();
        let traffic = phase_traffic(&t, &w, &m);
        assert_eq!(&traffic.mp[2..], &[0.0, 0.0]);
        assert_eq!(&traffic.dp[..2], &[0.0, 0.0]);
        let a = allocate(AllocScheme::MessageBw, &t, &w, &m, 400.0).unwrap();
        let total: f64 = traffic.total().iter().sum();
        for k in 0..4 {
            assert_relative_eq!(a.per_dim[k], 400.0 * traffic.total()[k] / total, max_relative = 1e-12);
        }
    }

    #[test]
    fn smart_allocation_shared_dim() {
        let t = parse_topology("Ring(8)_Switch(128)").unwrap();
        let w = gpt3();
        let m = map_parallelism(&t, &w).unwrap();
        assert!(m.shared.is_some());
        let a = allocate(AllocScheme::SmartBw, &t, &w, &m, 300.0).unwrap();
        assert_relative_eq!(a.per_dim.iter().sum::<f64>(), 300.0, max_relative = 1e-9);
    }

    #[test]
    fn single_dim_schemes_agree() {
        let t = parse_topology("Switch(16)").unwrap();
        let w = Workload::data_parallel("dp", 1000, 16, 1.0);
        let m = map_parallelism(&t, &w).unwrap();
        for s in AllocScheme::ALL {
            assert_eq!(allocate(s, &t, &w, &m, 123.0).unwrap().per_dim, vec![123.0]);
        }
    }

    #[test]
    fn scheme_strings() {
        assert_eq!("smart".parse::<AllocScheme>().unwrap(), AllocScheme::SmartBw);
        assert_eq!("MessageBW".parse::<AllocScheme>().unwrap(), AllocScheme::MessageBw);
        assert!("fast".parse::<AllocScheme>().is_err());
        let s: AllocScheme = serde_json::from_str("\"equal\"").unwrap();
        assert_eq!(s, AllocScheme::EqualBw);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn smart_beats_message_and_equal_splits(b in 1.0f64..1e3, m1 in 1e3f64..1e12, m2 in 1e3f64..1e12) {
                let (x, y) = smart_bw_unshared(b, m1, m2).unwrap();
                prop_assert!(((x + y) - b).abs() <= 1e-9 * b);
                let smart = sequential_objective(m1, m2, x, y);
                let msg = sequential_objective(m1, m2, b * m1 / (m1 + m2), b * m2 / (m1 + m2));
                let eq = sequential_objective(m1, m2, b / 2.0, b / 2.0);
                prop_assert!(smart <= msg * (1.0 + 1e-12));
                prop_assert!(smart <= eq * (1.0 + 1e-12));
            }

            #[test]
            fn shared_converges_to_unshared(b in 1.0f64..1e3, m1 in 1e3f64..1e12, m2 in 1e3f64..1e12) {
                let (x, y) = smart_bw_unshared(b, m1, m2).unwrap();
                let base = sequential_objective(m1, m2, x, y);
                let s = smart_bw_shared(b, m1, m2, 1e-7, 1e-7).unwrap();
                let near = sequential_objective(m1, m2, s.bw_mp, s.bw_dp);
                prop_assert!((near - base).abs() <= 1e-5 * base);
            }

            #[test]
            fn message_conserves_budget(b in 1.0f64..1e4, m in prop::collection::vec(0.0f64..1e9, 1..6)) {
                prop_assume!(m.iter().any(|x| *x > 0.0));
                let a = message_bw(b, &m).unwrap();
                prop_assert!((a.per_dim.iter().sum::<f64>() - b).abs() <= 1e-9 * b);
            }
        }
    }
}
