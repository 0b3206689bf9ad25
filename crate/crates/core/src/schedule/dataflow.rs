//! Executes a schedule on real integer payloads.
//!
//! Every NPU starts with its own vector. Each step of every stage is carried
//! out as explicit point-to-point messages following the stage's algorithm;
//! partial sums are accumulated on Reduce-Scatter and copied on All-Gather.
//! The run passes when every NPU ends up with the elementwise global sum and
//! the elements moved in each step agree with the byte counts the schedule
//! advertises.

use std::fmt;

use super::{Algorithm, CollectiveDim, CollectiveSchedule, Stage, StageKind};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DataflowFailure {
    /// Offending stage position, if the failure is tied to one.
    pub stage: Option<usize>,
    pub reason: String,
}

impl fmt::Display for DataflowFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(s) => write!(f, "stage {s}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

impl std::error::Error for DataflowFailure {}

fn fail(stage: Option<usize>, reason: impl Into<String>) -> DataflowFailure {
    DataflowFailure { stage, reason: reason.into() }
}

pub fn verify_schedule_dataflow<F: Scalar>(schedule: &CollectiveSchedule<F>, initial: &[Vec<i64>]) -> bool {
    check_schedule_dataflow(schedule, initial).is_ok()
}

/// Contiguous element window `[start, start + len)` within one chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Window {
    start: usize,
    len: usize,
}

struct Message {
    src: usize,
    dst: usize,
    // in units of segments of the group's current window
    seg_start: usize,
    seg_len: usize,
}

pub fn check_schedule_dataflow<F: Scalar>(
    schedule: &CollectiveSchedule<F>,
    initial: &[Vec<i64>],
) -> Result<(), DataflowFailure> {
    let levels = validate_shape(schedule)?;
    let npus: usize = levels.iter().map(|l| l.group_size).product();
    if initial.len() != npus {
        return Err(fail(None, format!("expected {npus} initial vectors, got {}", initial.len())));
    }
    let len = initial[0].len();
    if initial.iter().any(|v| v.len() != len) {
        return Err(fail(None, "initial vectors differ in length"));
    }
    let chunks = schedule.chunks;
    if len == 0 || !len.is_multiple_of(npus * chunks) {
        return Err(fail(None, format!("vector length {len} not divisible by {npus} NPUs x {chunks} chunks")));
    }
    let chunk_len = len / chunks;
    let bytes_per_elem = schedule.chunk_bytes() / F::count(chunk_len);

    let strides: Vec<usize> = levels
        .iter()
        .scan(1usize, |acc, l| {
            let s = *acc;
            *acc *= l.group_size;
            Some(s)
        })
        .collect();

    let mut data: Vec<Vec<i64>> = initial.to_vec();
    let mut owned = vec![Window { start: 0, len: chunk_len }; npus];
    // windows held before each Reduce-Scatter, restored by the matching All-Gather
    let mut saved: Vec<Vec<Window>> = Vec::new();

    for (si, stage) in schedule.stages.iter().enumerate() {
        let level = match stage.kind {
            StageKind::ReduceScatter => saved.len(),
            StageKind::AllGather => saved.len() - 1,
        };
        let p = stage.group_size;
        let stride = strides[level];
        if stage.kind == StageKind::ReduceScatter {
            saved.push(owned.clone());
        }
        let expected_steps = stage.algorithm.step_count(p);
        if stage.steps.len() != expected_steps {
            return Err(fail(
                Some(si),
                format!(
                    "{:?} on {p} NPUs takes {expected_steps} steps, schedule lists {}",
                    stage.algorithm,
                    stage.steps.len()
                ),
            ));
        }

        for base in group_bases(npus, stride, p) {
            let members: Vec<usize> = (0..p).map(|j| base + j * stride).collect();
            let window = match stage.kind {
                StageKind::ReduceScatter => owned[members[0]],
                StageKind::AllGather => saved[level][members[0]],
            };
            if members.iter().any(|&m| {
                let w = match stage.kind {
                    StageKind::ReduceScatter => owned[m],
                    StageKind::AllGather => saved[level][m],
                };
                w != window
            }) {
                return Err(fail(Some(si), "group members disagree on their data window"));
            }
            if window.len % p != 0 {
                return Err(fail(Some(si), format!("window of {} elements cannot be split {p} ways", window.len)));
            }
            let seg = window.len / p;

            for (step_no, step) in stage.steps.iter().enumerate() {
                let msgs = step_messages(stage, p, step_no);
                // every NPU must send the same amount, matching the schedule
                let mut sent = vec![0usize; p];
                let mut peers = vec![Vec::<usize>::new(); p];
                for m in &msgs {
                    sent[m.src] += m.seg_len * seg;
                    if !peers[m.src].contains(&m.dst) {
                        peers[m.src].push(m.dst);
                    }
                }
                let advertised = step.bytes_per_npu / bytes_per_elem;
                for j in 0..p {
                    let moved = F::count(sent[j]);
                    if (moved - advertised).abs() > F::lit(1e-6) * advertised.max(F::one()) {
                        return Err(fail(
                            Some(si),
                            format!(
                                "step {step_no}: NPU moves {sent:?} elements, schedule says {advertised}",
                                sent = sent[j]
                            ),
                        ));
                    }
                    if peers[j].len() != step.concurrent_transfers {
                        return Err(fail(
                            Some(si),
                            format!(
                                "step {step_no}: NPU talks to {} peers, schedule says {}",
                                peers[j].len(),
                                step.concurrent_transfers
                            ),
                        ));
                    }
                }
                apply(&mut data, &members, &msgs, stage.kind, window, seg, chunks, chunk_len);
            }

            for (j, &m) in members.iter().enumerate() {
                owned[m] = match stage.kind {
                    StageKind::ReduceScatter => Window { start: window.start + j * seg, len: seg },
                    StageKind::AllGather => window,
                };
            }
        }
        if stage.kind == StageKind::AllGather {
            saved.pop();
        }
    }

    let mut expected = vec![0i64; len];
    for v in initial {
        for (e, x) in expected.iter_mut().zip(v) {
            *e = e.wrapping_add(*x);
        }
    }
    for (npu, v) in data.iter().enumerate() {
        if *v != expected {
            let at = v.iter().zip(&expected).position(|(a, b)| a != b).unwrap_or(0);
            return Err(fail(None, format!("NPU {npu} holds {} at element {at}, expected {}", v[at], expected[at])));
        }
    }
    Ok(())
}

fn validate_shape<F: Scalar>(s: &CollectiveSchedule<F>) -> Result<Vec<CollectiveDim>, DataflowFailure> {
    if s.chunks == 0 {
        return Err(fail(None, "schedule has zero chunks"));
    }
    let n = s.stages.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(fail(None, format!("expected an even, non-zero stage count, got {n}")));
    }
    for (i, st) in s.stages.iter().enumerate() {
        let want = if i < n / 2 { StageKind::ReduceScatter } else { StageKind::AllGather };
        if st.kind != want {
            return Err(fail(Some(i), format!("expected {want:?}, found {:?}", st.kind)));
        }
        if st.group_size < 2 {
            return Err(fail(Some(i), format!("group of {} NPUs", st.group_size)));
        }
        if st.algorithm == Algorithm::HalvingDoubling && !st.group_size.is_power_of_two() {
            return Err(fail(Some(i), "halving-doubling on a non power-of-two group"));
        }
        let mirror = &s.stages[n - 1 - i];
        if mirror.dim_index != st.dim_index || mirror.group_size != st.group_size {
            return Err(fail(Some(i), "All-Gather order does not mirror Reduce-Scatter order"));
        }
    }
    // conservation of per-NPU buffer sizes along the stage chain
    let mut buffer = s.chunk_bytes();
    for (i, st) in s.stages.iter().enumerate() {
        if (st.input_bytes - buffer).abs() > F::lit(1e-9) * buffer {
            return Err(fail(Some(i), format!("input {} does not match the {} bytes held", st.input_bytes, buffer)));
        }
        buffer = st.output_bytes();
    }
    if (buffer - s.chunk_bytes()).abs() > F::lit(1e-9) * buffer {
        return Err(fail(Some(n - 1), "All-Reduce does not restore the full buffer"));
    }
    Ok(s.levels())
}

/// Lowest-id member of every group along a level.
fn group_bases(npus: usize, stride: usize, p: usize) -> impl Iterator<Item = usize> {
    (0..npus).filter(move |id| (id / stride).is_multiple_of(p))
}

fn step_messages<F: Scalar>(stage: &Stage<F>, p: usize, step: usize) -> Vec<Message> {
    let mut out = Vec::new();
    match (stage.algorithm, stage.kind) {
        (Algorithm::Ring, StageKind::ReduceScatter) => {
            for j in 0..p {
                let seg = (j + 2 * p - step - 1) % p;
                out.push(Message { src: j, dst: (j + 1) % p, seg_start: seg, seg_len: 1 });
            }
        }
        (Algorithm::Ring, StageKind::AllGather) => {
            for j in 0..p {
                let seg = (j + p - step % p) % p;
                out.push(Message { src: j, dst: (j + 1) % p, seg_start: seg, seg_len: 1 });
            }
        }
        (Algorithm::Direct, StageKind::ReduceScatter) => {
            for j in 0..p {
                for i in (0..p).filter(|&i| i != j) {
                    out.push(Message { src: j, dst: i, seg_start: i, seg_len: 1 });
                }
            }
        }
        (Algorithm::Direct, StageKind::AllGather) => {
            for j in 0..p {
                for i in (0..p).filter(|&i| i != j) {
                    out.push(Message { src: j, dst: i, seg_start: j, seg_len: 1 });
                }
            }
        }
        (Algorithm::HalvingDoubling, StageKind::ReduceScatter) => {
            // distance halves each step; each NPU keeps the half that
            // contains its own final segment and ships the other half
            let d = p >> (step + 1);
            let span = 2 * d;
            for j in 0..p {
                let lo = j / span * span;
                let other = if j & d != 0 { lo } else { lo + d };
                out.push(Message { src: j, dst: j ^ d, seg_start: other, seg_len: d });
            }
        }
        (Algorithm::HalvingDoubling, StageKind::AllGather) => {
            let d = 1usize << step;
            for j in 0..p {
                let held = j / d * d;
                out.push(Message { src: j, dst: j ^ d, seg_start: held, seg_len: d });
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn apply(
    data: &mut [Vec<i64>],
    members: &[usize],
    msgs: &[Message],
    kind: StageKind,
    window: Window,
    seg: usize,
    chunks: usize,
    chunk_len: usize,
) {
    // snapshot payloads first: a step is synchronous
    let payloads: Vec<Vec<i64>> = msgs
        .iter()
        .map(|m| {
            let src = &data[members[m.src]];
            let mut buf = Vec::with_capacity(m.seg_len * seg * chunks);
            for c in 0..chunks {
                let from = c * chunk_len + window.start + m.seg_start * seg;
                buf.extend_from_slice(&src[from..from + m.seg_len * seg]);
            }
            buf
        })
        .collect();
    for (m, buf) in msgs.iter().zip(payloads) {
        let dst = &mut data[members[m.dst]];
        let n = m.seg_len * seg;
        for c in 0..chunks {
            let from = c * chunk_len + window.start + m.seg_start * seg;
            let part = &buf[c * n..(c + 1) * n];
            let target = &mut dst[from..from + n];
            match kind {
                StageKind::ReduceScatter => {
                    for (t, x) in target.iter_mut().zip(part) {
                        *t = t.wrapping_add(*x);
                    }
                }
                StageKind::AllGather => target.copy_from_slice(part),
            }
        }
    }
}
