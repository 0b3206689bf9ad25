//! Hand-evaluated and brute-force checks of the public API.

use approx::assert_relative_eq;
use hiernet::alloc::{allocate_with, message_bw, phase_traffic, sequential_objective, shared_constraint, AllocOptions};
use hiernet::cost::network_cost_raw;
use hiernet::explore::last_dim_traffic;
use hiernet::netsim::simulate_collective;
use hiernet::schedule::{build_basic_stage, topology_dims, CollectiveDim, StageKind};
use hiernet::topology::BlockKind;
use hiernet::{
    build_hierarchical_allreduce, map_parallelism, parse_topology, per_dim_traffic, smart_bw_shared, smart_bw_unshared,
    stage_duration, transfer_time, verify_schedule_dataflow, AllocScheme, BwAllocation, NetParams, UnitCosts, Workload,
};

const MB: f64 = 1e6;

fn level(dim_index: usize, block: BlockKind, group_size: usize) -> CollectiveDim {
    CollectiveDim { dim_index, group_size, block }
}

fn rings(sizes: &[usize]) -> Vec<CollectiveDim> {
    sizes.iter().enumerate().map(|(i, p)| level(i + 1, BlockKind::Ring, *p)).collect()
}

/// Bytes each NPU sends per dimension, added up step by step from a 1-chunk schedule.
fn byte_log(levels: &[CollectiveDim], bytes: f64) -> Vec<f64> {
    let s = build_hierarchical_allreduce(levels, bytes, 1).unwrap();
    let mut out = vec![0.0; levels.len()];
    for stage in &s.stages {
        for step in &stage.steps {
            out[stage.dim_index - 1] += step.bytes_per_npu;
        }
    }
    out
}

#[test]
fn halving_doubling_reduce_scatter_on_eight() {
    let s = build_basic_stage(StageKind::ReduceScatter, level(1, BlockKind::Switch, 8), 8.0 * MB).unwrap();
    let steps: Vec<f64> = s.steps.iter().map(|s| s.bytes_per_npu).collect();
    assert_eq!(steps, vec![4.0 * MB, 2.0 * MB, 1.0 * MB]);
    assert_eq!(s.bytes_sent(), 7.0 * MB);
}

#[test]
fn direct_all_gather_on_four() {
    let s = build_basic_stage(StageKind::AllGather, level(1, BlockKind::FullyConnected, 4), MB).unwrap();
    assert_eq!(s.steps.len(), 1);
    assert_eq!(s.steps[0].concurrent_transfers, 3);
    // each of the 3 transfers carries the whole 1 MB shard
    assert_eq!(s.steps[0].bytes_per_npu, 3.0 * MB);
    assert_eq!(s.output_bytes(), 4.0 * MB);
}

#[test]
fn three_ring_hierarchy_stage_sizes() {
    let s = build_hierarchical_allreduce(&rings(&[4, 2, 2]), 16.0 * MB, 1).unwrap();
    assert_eq!(s.stages.len(), 6);
    let inputs: Vec<f64> = s.stages.iter().map(|s| s.input_bytes / MB).collect();
    let outputs: Vec<f64> = s.stages[3..].iter().map(|s| s.output_bytes() / MB).collect();
    assert_eq!(inputs, vec![16.0, 4.0, 2.0, 1.0, 2.0, 4.0]);
    assert_eq!(outputs, vec![2.0, 4.0, 16.0]);
}

#[test]
fn per_dim_traffic_matches_byte_log() {
    let levels = rings(&[4, 2, 2]);
    let m = per_dim_traffic(&levels, 16.0 * MB);
    assert_eq!(m, byte_log(&levels, 16.0 * MB));
    assert_eq!(m, vec![24.0 * MB, 4.0 * MB, 2.0 * MB]);

    let single = rings(&[4]);
    assert_eq!(per_dim_traffic(&single, 4.0 * MB), vec![6.0 * MB]);
    assert_eq!(byte_log(&single, 4.0 * MB), vec![6.0 * MB]);
}

#[test]
fn per_dim_traffic_is_linear_in_bytes() {
    let levels = topology_dims(&parse_topology("Ring(2)_FC(8)_Ring(8)_Switch(8)").unwrap());
    let a = per_dim_traffic(&levels, 3.0 * MB);
    let b = per_dim_traffic(&levels, 7.5 * MB);
    for (x, y) in a.iter().zip(&b) {
        assert_relative_eq!(y / x, 2.5, max_relative = 1e-12);
    }
}

#[test]
fn ring_and_fc_of_two_agree() {
    let ring = build_hierarchical_allreduce(&[level(1, BlockKind::Ring, 2)], 10.0 * MB, 2).unwrap();
    let fc = build_hierarchical_allreduce(&[level(1, BlockKind::FullyConnected, 2)], 10.0 * MB, 2).unwrap();
    assert_eq!(ring.bytes_per_dim(1), fc.bytes_per_dim(1));
    let net = NetParams::default();
    let alloc = BwAllocation::from_dims(vec![50.0]).unwrap();
    let (tr, tf) = (simulate_collective(&ring, &alloc, &net).unwrap(), simulate_collective(&fc, &alloc, &net).unwrap());
    assert_relative_eq!(tr.comm_time, tf.comm_time, max_relative = 1e-12);
}

#[test]
fn sixteen_npus_reach_the_global_sum() {
    let t = parse_topology("Ring(4)_FC(2)_Ring(2)").unwrap();
    let s = build_hierarchical_allreduce(&topology_dims(&t), 16.0, 2).unwrap();
    let data: Vec<Vec<i64>> = (0..16).map(|n| (0..32).map(|i| (n * 37 + i * 11) % 101 - 50).collect()).collect();
    assert!(verify_schedule_dataflow(&s, &data));
}

#[test]
fn transfer_and_stage_times_by_hand() {
    assert_relative_eq!(transfer_time(MB, 100.0, 1, 5e-7).unwrap(), 1.05e-5, max_relative = 1e-12);

    let net = NetParams::default();
    let ring = build_basic_stage(StageKind::ReduceScatter, level(1, BlockKind::Ring, 4), 4.0 * MB).unwrap();
    assert_relative_eq!(stage_duration(&ring, 100.0, &net).unwrap(), 3.0 * (5e-7 + 1e-5), max_relative = 1e-12);
    let direct = build_basic_stage(StageKind::ReduceScatter, level(1, BlockKind::FullyConnected, 4), 4.0 * MB).unwrap();
    assert_relative_eq!(stage_duration(&direct, 100.0, &net).unwrap(), 5e-7 + 3e-5, max_relative = 1e-12);
    let hd = build_basic_stage(StageKind::ReduceScatter, level(1, BlockKind::Switch, 8), 8.0 * MB).unwrap();
    assert_relative_eq!(stage_duration(&hd, 100.0, &net.without_latency()).unwrap(), 7e-5, max_relative = 1e-12);
}

#[test]
fn two_chunks_on_one_dim_serialize() {
    let net = NetParams::default();
    let s = build_hierarchical_allreduce(&[level(1, BlockKind::Ring, 4)], 8.0 * MB, 2).unwrap();
    let d = stage_duration(&s.stages[0], 40.0, &net).unwrap();
    assert_relative_eq!(stage_duration(&s.stages[1], 40.0, &net).unwrap(), d, max_relative = 1e-12);
    let r = simulate_collective(&s, &BwAllocation::from_dims(vec![40.0]).unwrap(), &net).unwrap();
    assert_relative_eq!(r.comm_time, 4.0 * d, max_relative = 1e-12);
}

#[test]
fn gradient_volume_defaults_to_two_bytes_per_param() {
    let w = Workload::data_parallel("Transformer-17B", 17_000_000_000, 1024, 0.0);
    assert_eq!(w.comm_volumes(), (0.0, 34e9));
}

#[test]
fn message_split_of_the_three_ring_example() {
    let m = per_dim_traffic(&rings(&[4, 2, 2]), 16.0 * MB);
    let a = message_bw(300.0, &m).unwrap();
    for (x, want) in a.per_dim.iter().zip([240.0, 40.0, 20.0]) {
        assert_relative_eq!(*x, want, max_relative = 1e-12);
    }
}

#[test]
fn hybrid_traffic_stays_in_its_own_dims() {
    let t = parse_topology("Ring(2)_FC(8)_Ring(8)_Switch(8)").unwrap();
    let w = Workload {
        mp_size: 16,
        dp_size: 64,
        mp_comm_bytes: 3e11,
        ..Workload::data_parallel("GPT-3", 175_000_000_000, 64, 9.0)
    };
    let mapping = map_parallelism(&t, &w).unwrap();
    let traffic = phase_traffic(&t, &w, &mapping);
    assert!(traffic.mp[..2].iter().all(|m| *m > 0.0) && traffic.mp[2..].iter().all(|m| *m == 0.0));
    assert!(traffic.dp[..2].iter().all(|m| *m == 0.0) && traffic.dp[2..].iter().all(|m| *m > 0.0));

    let opts = AllocOptions::default();
    let a = allocate_with(AllocScheme::MessageBw, &t, &w, &mapping, 400.0, &opts).unwrap();
    let total: Vec<f64> = traffic.mp.iter().zip(&traffic.dp).map(|(x, y)| x + y).collect();
    let sum: f64 = total.iter().sum();
    for (b, m) in a.per_dim.iter().zip(&total) {
        assert_relative_eq!(*b, 400.0 * m / sum, max_relative = 1e-12);
    }
}

#[test]
fn unshared_closed_form() {
    let (x, y) = smart_bw_unshared(300.0, 4e9, 1e9).unwrap();
    assert_relative_eq!(x, 200.0, max_relative = 1e-12);
    assert_relative_eq!(y, 100.0, max_relative = 1e-12);
    let best = sequential_objective(4e9, 1e9, x, y);
    for i in 1..1000 {
        let bx = 300.0 * i as f64 / 1000.0;
        assert!(best <= sequential_objective(4e9, 1e9, bx, 300.0 - bx) * (1.0 + 1e-12));
    }
}

#[test]
fn shared_solver_against_a_two_dimensional_grid() {
    let (b, m_mp, m_dp, r_mp, r_dp) = (300.0, 4.0, 4.0, 0.5, 0.5);
    let s = smart_bw_shared(b, m_mp, m_dp, r_mp, r_dp).unwrap();
    assert_relative_eq!(shared_constraint(s.bw_mp, s.bw_dp, r_mp, r_dp), b, max_relative = 1e-9);
    let solved = sequential_objective(m_mp, m_dp, s.bw_mp, s.bw_dp);

    // every feasible grid point, at 0.25 GB/s resolution
    let mut grid = f64::INFINITY;
    for i in 1..=1200 {
        for j in 1..=1200 {
            let (x, y) = (i as f64 * 0.25, j as f64 * 0.25);
            if shared_constraint(x, y, r_mp, r_dp) <= b {
                grid = grid.min(sequential_objective(m_mp, m_dp, x, y));
            }
        }
    }
    assert!(solved <= grid * (1.0 + 1e-6), "solver {solved} grid {grid}");
    assert!((grid - solved) / solved <= 1e-6, "solver {solved} grid {grid}");
}

#[test]
fn ring_has_only_link_cost() {
    let c = network_cost_raw(&parse_topology("Ring(4)").unwrap(), &[10.0], &UnitCosts::default()).unwrap();
    assert_eq!((c.link_cost(), c.nic_cost(), c.switch_cost()), (80.0, 0.0, 0.0));
}

#[test]
fn last_dim_traffic_is_linear_in_params() {
    let t = parse_topology("Ring(8)_FC(8)_Switch(16)").unwrap();
    let w = Workload::data_parallel("w", 1_000_000_000, 1024, 0.0);
    let a = last_dim_traffic(&t, &w).unwrap().total;
    let b = last_dim_traffic(&t, &w.scaled_params(2)).unwrap().total;
    assert_relative_eq!(b, 2.0 * a, max_relative = 1e-12);
    // only the DP collective crosses the last dim: 2 * (S / 64) * 15 / 16
    assert_relative_eq!(a, 2.0 * (2e9 / 64.0) * 15.0 / 16.0, max_relative = 1e-12);
}
