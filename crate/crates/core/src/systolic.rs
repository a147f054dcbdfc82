//! Cycle-level model of the shift-register / systolic-array tile core.
//!
//! Structure for a `D x D` array:
//!
//! - Two triangular shift-register files. Lane `i` of each holds `i + 1`
//!   registers; every cycle a new input row enters register 0 of each lane and
//!   the lane shifts by one. The last register of each lane (the diagonal)
//!   therefore presents input element `i` skewed by `i` cycles.
//! - Two `D x D` window shift registers. The A window loads column 0 from the
//!   A-side diagonal and shifts right along its rows; the B window loads row 0
//!   from the B-side diagonal and shifts top to bottom.
//! - A `D x D` grid of processing elements. PE `(i, j)` multiplies the two
//!   window registers at `(i, j)` and accumulates.
//!
//! All registers update at the cycle boundary from the previous cycle's
//! values. Input row `p` of `A^T` and `B` is consumed by PE `(i, j)` in cycle
//! `p + i + j + 2`, so an `m x k x n` product takes
//! `m*k*n / D^2 + 2*D` cycles: `2*D` of pipeline fill and no drain, because
//! output blocks stream back to back and each PE's result is handed off when
//! the first operand of the next block reaches it.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::microkernel::Tile;
use crate::scalar::Accumulator;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SystolicConfig {
    pub array_dim: usize,
    pub m_p: usize,
    pub k_p: usize,
    pub n_p: usize,
}

impl SystolicConfig {
    pub fn new(array_dim: usize, m_p: usize, k_p: usize, n_p: usize) -> Result<Self> {
        if !(2..=64).contains(&array_dim) {
            return Err(Error::Config(format!("array_dim {array_dim} outside 2..=64")));
        }
        if k_p == 0 || m_p == 0 || n_p == 0 {
            return Err(Error::Config("tile dims must be positive".into()));
        }
        if !m_p.is_multiple_of(array_dim) || !n_p.is_multiple_of(array_dim) {
            return Err(Error::Config(format!(
                "tile {m_p}x{n_p} output not divisible by array_dim {array_dim}"
            )));
        }
        if !k_p.is_multiple_of(array_dim) {
            return Err(Error::Config(format!(
                "inner dim {k_p} not divisible by array_dim {array_dim}"
            )));
        }
        Ok(SystolicConfig {
            array_dim,
            m_p,
            k_p,
            n_p,
        })
    }

    /// Cycles from the first input row until the far corner PE receives it.
    pub fn fill_latency(&self) -> u64 {
        2 * self.array_dim as u64
    }

    pub fn drain_latency(&self) -> u64 {
        0
    }

    pub fn steady_cycles(&self) -> u64 {
        (self.m_p * self.k_p * self.n_p / (self.array_dim * self.array_dim)) as u64
    }

    /// Total cycles for one tile product.
    pub fn expected_cycles(&self) -> u64 {
        self.fill_latency() + self.steady_cycles() + self.drain_latency()
    }
}

/// An A-side register: value plus the output-block tag travelling with it.
/// `None` marks a pipeline bubble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Tagged<A> {
    value: A,
    tag: Option<u32>,
}

impl<A: Accumulator> Tagged<A> {
    const BUBBLE: Self = Tagged {
        value: A::ZERO,
        tag: None,
    };
}

/// A finished accumulator handed off by PE `(row, col)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeResult<A> {
    pub tag: u32,
    pub row: usize,
    pub col: usize,
    pub value: A,
}

/// Register state of one array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystolicState<A> {
    dim: usize,
    srl_a: Vec<Vec<Tagged<A>>>,
    srl_b: Vec<Vec<A>>,
    win_a: Vec<Tagged<A>>,
    win_b: Vec<A>,
    acc: Vec<A>,
    acc_tag: Vec<Option<u32>>,
    cycle: u64,
    macs: u64,
    input_tag: u32,
    last_active: usize,
    peak_active: usize,
    full_cycles: u64,
    completed: Vec<PeResult<A>>,
}

impl<A: Accumulator> SystolicState<A> {
    pub fn new(array_dim: usize) -> Self {
        let d = array_dim;
        SystolicState {
            dim: d,
            srl_a: (0..d).map(|i| vec![Tagged::BUBBLE; i + 1]).collect(),
            srl_b: (0..d).map(|j| vec![A::ZERO; j + 1]).collect(),
            win_a: vec![Tagged::BUBBLE; d * d],
            win_b: vec![A::ZERO; d * d],
            acc: vec![A::ZERO; d * d],
            acc_tag: vec![None; d * d],
            cycle: 0,
            macs: 0,
            input_tag: 0,
            last_active: 0,
            peak_active: 0,
            full_cycles: 0,
            completed: Vec::new(),
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.dim);
    }

    pub fn array_dim(&self) -> usize {
        self.dim
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn macs(&self) -> u64 {
        self.macs
    }

    /// PEs that performed a MAC in the most recent cycle.
    pub fn last_active(&self) -> usize {
        self.last_active
    }

    pub fn peak_active(&self) -> usize {
        self.peak_active
    }

    /// Cycles in which every PE performed a MAC.
    pub fn full_cycles(&self) -> u64 {
        self.full_cycles
    }

    /// Marks subsequent input rows as belonging to output block `tag`.
    pub fn set_block(&mut self, tag: u32) {
        self.input_tag = tag;
    }

    pub fn accumulators(&self) -> &[A] {
        &self.acc
    }

    pub fn accumulator(&self, i: usize, j: usize) -> A {
        self.acc[i * self.dim + j]
    }

    /// A-window register `(i, j)` value, bubbles read as zero.
    pub fn window_a(&self, i: usize, j: usize) -> A {
        self.win_a[i * self.dim + j].value
    }

    pub fn window_b(&self, i: usize, j: usize) -> A {
        self.win_b[i * self.dim + j]
    }

    /// Diagonal (last) register of A-side lane `i`.
    pub fn diagonal_a(&self, i: usize) -> A {
        self.srl_a[i][i].value
    }

    pub fn diagonal_b(&self, j: usize) -> A {
        self.srl_b[j][j]
    }

    /// True when no valid operand is left anywhere in the pipeline.
    pub fn is_drained(&self) -> bool {
        self.srl_a.iter().flatten().all(|t| t.tag.is_none()) && self.win_a.iter().all(|t| t.tag.is_none())
    }

    pub fn take_completed(&mut self) -> Vec<PeResult<A>> {
        std::mem::take(&mut self.completed)
    }

    /// Hands off every accumulator that still holds a block result.
    pub fn flush(&mut self) {
        for idx in 0..self.acc.len() {
            if let Some(tag) = self.acc_tag[idx].take() {
                self.completed.push(PeResult {
                    tag,
                    row: idx / self.dim,
                    col: idx % self.dim,
                    value: self.acc[idx],
                });
            }
        }
    }

    /// Advances one clock cycle. `rows` is a row of `A^T` and a row of `B`
    /// (each `array_dim` wide), or `None` for a bubble.
    pub fn step(&mut self, rows: Option<(&[A], &[A])>) -> Result<()> {
        let d = self.dim;
        if let Some((a, b)) = rows {
            if a.len() != d || b.len() != d {
                return Err(Error::Shape(format!(
                    "input rows of width {} and {} on a {d}x{d} array",
                    a.len(),
                    b.len()
                )));
            }
        }

        // PEs read the window registers as they stood at the end of the
        // previous cycle.
        let mut active = 0;
        for idx in 0..d * d {
            let a = self.win_a[idx];
            let Some(tag) = a.tag else { continue };
            let prod = a.value.wmul(self.win_b[idx]);
            if self.acc_tag[idx] == Some(tag) {
                self.acc[idx] = self.acc[idx].wadd(prod);
            } else {
                if let Some(old) = self.acc_tag[idx] {
                    self.completed.push(PeResult {
                        tag: old,
                        row: idx / d,
                        col: idx % d,
                        value: self.acc[idx],
                    });
                }
                self.acc[idx] = prod;
                self.acc_tag[idx] = Some(tag);
            }
            active += 1;
        }
        self.macs += active as u64;
        self.last_active = active;
        self.peak_active = self.peak_active.max(active);
        if active == d * d {
            self.full_cycles += 1;
        }

        // Window registers: shift, then load the edge from the old diagonals.
        for i in 0..d {
            let row = &mut self.win_a[i * d..(i + 1) * d];
            row.copy_within(0..d - 1, 1);
            row[0] = self.srl_a[i][i];
        }
        for i in (1..d).rev() {
            let (above, here) = self.win_b.split_at_mut(i * d);
            here[..d].copy_from_slice(&above[(i - 1) * d..i * d]);
        }
        for j in 0..d {
            self.win_b[j] = self.srl_b[j][j];
        }

        // Triangular shift registers ingest the new rows.
        for i in 0..d {
            let lane = &mut self.srl_a[i];
            lane.copy_within(0..i, 1);
            lane[0] = match rows {
                Some((a, _)) => Tagged {
                    value: a[i],
                    tag: Some(self.input_tag),
                },
                None => Tagged::BUBBLE,
            };
            let lane = &mut self.srl_b[i];
            lane.copy_within(0..i, 1);
            lane[0] = match rows {
                Some((_, b)) => b[i],
                None => A::ZERO,
            };
        }

        self.cycle += 1;
        Ok(())
    }

    /// Flattened register files in a fixed order, for tracing.
    pub fn snapshot(&self) -> Snapshot<A> {
        Snapshot {
            cycle: self.cycle,
            srl_a: self.srl_a.iter().flatten().map(|t| t.value).collect(),
            srl_b: self.srl_b.iter().flatten().copied().collect(),
            win_a: self.win_a.iter().map(|t| t.value).collect(),
            win_b: self.win_b.clone(),
            acc: self.acc.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot<A> {
    pub cycle: u64,
    pub srl_a: Vec<A>,
    pub srl_b: Vec<A>,
    pub win_a: Vec<A>,
    pub win_b: Vec<A>,
    pub acc: Vec<A>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimStats {
    pub cycles: u64,
    pub fill_cycles: u64,
    pub drain_cycles: u64,
    pub macs: u64,
    /// Most PEs active in any single cycle.
    pub peak_macs_per_cycle: u64,
    /// Cycles in which all PEs were active.
    pub full_cycles: u64,
}

impl SimStats {
    pub fn steady_cycles(&self) -> u64 {
        self.cycles - self.fill_cycles - self.drain_cycles
    }
}

fn check_operands<A: Accumulator>(cfg: &SystolicConfig, lt: &Tile<A>, r: &Tile<A>) -> Result<()> {
    if lt.shape() != (cfg.k_p, cfg.m_p) || r.shape() != (cfg.k_p, cfg.n_p) {
        return Err(Error::Shape(format!(
            "systolic tile expects A^T {}x{} and B {}x{}, got {:?} and {:?}",
            cfg.k_p,
            cfg.m_p,
            cfg.k_p,
            cfg.n_p,
            lt.shape(),
            r.shape()
        )));
    }
    Ok(())
}

/// Streams a full tile product through a fresh array, calling `observe`
/// after every cycle.
fn drive<A: Accumulator>(
    cfg: &SystolicConfig,
    lt: &Tile<A>,
    r: &Tile<A>,
    mut observe: impl FnMut(&SystolicState<A>),
) -> Result<(Tile<A>, SimStats)> {
    check_operands(cfg, lt, r)?;
    let d = cfg.array_dim;
    let (bm, bn) = (cfg.m_p / d, cfg.n_p / d);
    let mut st = SystolicState::new(d);
    for bi in 0..bm {
        for bj in 0..bn {
            st.set_block((bi * bn + bj) as u32);
            for p in 0..cfg.k_p {
                let a = &lt.row(p)[bi * d..(bi + 1) * d];
                let b = &r.row(p)[bj * d..(bj + 1) * d];
                st.step(Some((a, b)))?;
                observe(&st);
            }
        }
    }
    while !st.is_drained() {
        st.step(None)?;
        observe(&st);
    }
    st.flush();

    let mut out = Tile::zeros(cfg.m_p, cfg.n_p);
    for res in st.take_completed() {
        let (bi, bj) = (res.tag as usize / bn, res.tag as usize % bn);
        out.set(bi * d + res.row, bj * d + res.col, res.value);
    }
    let stats = SimStats {
        cycles: st.cycle(),
        fill_cycles: cfg.fill_latency(),
        drain_cycles: cfg.drain_latency(),
        macs: st.macs(),
        peak_macs_per_cycle: st.peak_active() as u64,
        full_cycles: st.full_cycles(),
    };
    Ok((out, stats))
}

/// Computes `lt^T * r` on the simulated array. `lt` is the `k_p x m_p`
/// transposed left operand.
pub fn run_tile<A: Accumulator>(cfg: &SystolicConfig, lt: &Tile<A>, r: &Tile<A>) -> Result<(Tile<A>, SimStats)> {
    drive(cfg, lt, r, |_| {})
}

/// Per-cycle CSV trace of every register file. Intended for small arrays.
pub fn trace_csv<A: Accumulator>(cfg: &SystolicConfig, lt: &Tile<A>, r: &Tile<A>) -> Result<String> {
    let d = cfg.array_dim;
    let mut out = String::from("cycle");
    for i in 0..d {
        for k in 0..=i {
            write!(out, ",srl_a_{i}_{k}").unwrap();
        }
    }
    for j in 0..d {
        for k in 0..=j {
            write!(out, ",srl_b_{j}_{k}").unwrap();
        }
    }
    for name in ["win_a", "win_b", "acc"] {
        for i in 0..d {
            for j in 0..d {
                write!(out, ",{name}_{i}_{j}").unwrap();
            }
        }
    }
    out.push('\n');
    let mut push = |s: &SystolicState<A>| {
        let snap = s.snapshot();
        write!(out, "{}", snap.cycle).unwrap();
        for v in snap
            .srl_a
            .iter()
            .chain(&snap.srl_b)
            .chain(&snap.win_a)
            .chain(&snap.win_b)
            .chain(&snap.acc)
        {
            write!(out, ",{}", v.to_i128()).unwrap();
        }
        out.push('\n');
    };
    push(&SystolicState::new(d));
    drive(cfg, lt, r, &mut push)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microkernel::tile_gemm_accumulate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tile(rng: &mut impl Rng, rows: usize, cols: usize) -> Tile<i64> {
        Tile::from_fn(rows, cols, |_, _| rng.gen::<i16>() as i64)
    }

    fn reference(l: &Tile<i64>, r: &Tile<i64>) -> Tile<i64> {
        let mut acc = Tile::zeros(l.rows(), r.cols());
        tile_gemm_accumulate(&mut acc, l, r).unwrap();
        acc
    }

    #[test]
    fn zero_streams_keep_zero_accumulators() {
        let mut st = SystolicState::<i32>::new(4);
        let z = [0; 4];
        for _ in 0..37 {
            st.step(Some((&z, &z))).unwrap();
            assert!(st.accumulators().iter().all(|&v| v == 0));
        }
        for _ in 0..10 {
            st.step(None).unwrap();
        }
        assert!(st.accumulators().iter().all(|&v| v == 0));
    }

    #[test]
    fn two_by_two_example_by_hand() {
        // A = [[1, 2], [3, 4]], B = [[5, 6], [7, 8]]; A^T rows are A's columns.
        let a_t = [[1i32, 3], [2, 4]];
        let b = [[5i32, 6], [7, 8]];
        let mut st = SystolicState::new(2);
        for p in 0..2 {
            st.step(Some((&a_t[p], &b[p]))).unwrap();
        }
        let mut extra = 0;
        while !st.is_drained() {
            st.step(None).unwrap();
            extra += 1;
        }
        // last row enters at cycle 1 and reaches PE (1,1) in cycle 1+1+1+2 = 5
        assert_eq!(extra, 4);
        assert_eq!(st.cycle(), 2 + 4);
        assert_eq!(st.accumulators(), &[19, 22, 43, 50]);
        assert_eq!(st.macs(), 8);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn window_loads_previous_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 4;
        let mut st = SystolicState::<i64>::new(d);
        let mut diag_history: Vec<Vec<(i64, i64)>> = Vec::new();
        for t in 0..20 {
            let a: Vec<i64> = (0..d).map(|_| rng.gen_range(1..100)).collect();
            let b: Vec<i64> = (0..d).map(|_| rng.gen_range(1..100)).collect();
            diag_history.push((0..d).map(|i| (st.diagonal_a(i), st.diagonal_b(i))).collect());
            st.step(Some((&a, &b))).unwrap();
            // diag_history[t] is the diagonal at the end of cycle t-1
            for i in 0..d {
                for j in 0..d {
                    if t >= j {
                        assert_eq!(st.window_a(i, j), diag_history[t - j][i].0);
                        assert_eq!(st.window_b(j, i), diag_history[t - j][i].1);
                    }
                }
            }
        }
    }

    #[test]
    fn four_cube_on_two_by_two_counts_by_hand() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let l = random_tile(&mut rng, 4, 4);
        let r = random_tile(&mut rng, 4, 4);
        let cfg = SystolicConfig::new(2, 4, 4, 4).unwrap();
        let (out, stats) = run_tile(&cfg, &l.transpose(), &r).unwrap();
        assert_eq!(out, reference(&l, &r));
        // four 2x2 output blocks x 4 input rows, plus 2*2 fill
        assert_eq!(stats.cycles, 16 + 4);
        assert_eq!(stats.macs, 64);
        assert_eq!(stats.peak_macs_per_cycle, 4);
    }

    #[test]
    fn tile_on_sixteen_array() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let l = random_tile(&mut rng, 64, 64);
        let r = random_tile(&mut rng, 64, 64);
        let cfg = SystolicConfig::new(16, 64, 64, 64).unwrap();
        let (out, stats) = run_tile(&cfg, &l.transpose(), &r).unwrap();
        assert_eq!(out, reference(&l, &r));
        assert!((1024..=1024 + 64).contains(&stats.cycles));
        assert_eq!(stats.cycles, cfg.expected_cycles());
        assert_eq!(stats.steady_cycles(), 1024);
    }

    #[test]
    fn identity_lhs_returns_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let cfg = SystolicConfig::new(4, 8, 8, 12).unwrap();
        let r = random_tile(&mut rng, 8, 12);
        let (out, _) = run_tile(&cfg, &Tile::identity(8), &r).unwrap();
        assert_eq!(out, r);
    }

    #[test]
    fn rectangular_tiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let cfg = SystolicConfig::new(4, 8, 12, 16).unwrap();
        let l = random_tile(&mut rng, 8, 12);
        let r = random_tile(&mut rng, 12, 16);
        let (out, stats) = run_tile(&cfg, &l.transpose(), &r).unwrap();
        assert_eq!(out, reference(&l, &r));
        assert_eq!(stats.steady_cycles(), (8 * 12 * 16 / 16) as u64);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SystolicConfig::new(1, 4, 4, 4).is_err());
        assert!(SystolicConfig::new(4, 6, 4, 4).is_err());
        let cfg = SystolicConfig::new(2, 4, 4, 4).unwrap();
        let t = Tile::<i32>::zeros(4, 2);
        assert!(run_tile(&cfg, &t, &Tile::zeros(4, 4)).is_err());
        let mut st = SystolicState::<i32>::new(2);
        assert!(st.step(Some((&[1, 2, 3], &[1, 2]))).is_err());
    }

    #[test]
    fn identical_streams_give_identical_trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let cfg = SystolicConfig::new(2, 4, 4, 4).unwrap();
        let l = random_tile(&mut rng, 4, 4).transpose();
        let r = random_tile(&mut rng, 4, 4);
        let a = trace_csv(&cfg, &l, &r).unwrap();
        let b = trace_csv(&cfg, &l, &r).unwrap();
        assert_eq!(a, b);
        let mut st = SystolicState::<i64>::new(2);
        st.step(Some((&[1, 2], &[3, 4]))).unwrap();
        st.reset();
        assert_eq!(st, SystolicState::new(2));
    }

    #[test]
    fn trace_header_and_length() {
        let cfg = SystolicConfig::new(2, 2, 2, 2).unwrap();
        let l = Tile::<i32>::identity(2);
        let r = Tile::from_fn(2, 2, |i, j| (i * 2 + j) as i32 + 1);
        let csv = trace_csv(&cfg, &l, &r).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "cycle,srl_a_0_0,srl_a_1_0,srl_a_1_1,srl_b_0_0,srl_b_1_0,srl_b_1_1,\
             win_a_0_0,win_a_0_1,win_a_1_0,win_a_1_1,win_b_0_0,win_b_0_1,win_b_1_0,win_b_1_1,\
             acc_0_0,acc_0_1,acc_1_0,acc_1_1"
        );
        // reset row plus k_p + 2*D cycles
        assert_eq!(lines.count(), 1 + 2 + 4);
        assert!(csv.lines().last().unwrap().ends_with(",1,2,3,4"));
    }
}
