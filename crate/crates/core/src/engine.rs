//! Blocked GeMM executor.
//!
//! `C = A * B` is computed one 4x4 tile block at a time. For every output
//! block `(br, bc)` the engine keeps a C tile grid resident, walks the shared
//! inner dimension block by block, loads the A and B grids once each, and
//! runs the schedule over them:
//!
//! ```text
//! for br in block rows of C          (outermost)
//!   for bc in block cols of C
//!     gridC = 0
//!     for bk in inner blocks         (innermost)
//!       load gridA(br, bk), gridB(bk, bc)
//!       for m_i in schedule:
//!         lhs = sum(+-A tiles), rhs = sum(+-B tiles)
//!         product -> stream -> gridC[out] += +-product
//!     store gridC
//! ```
//!
//! Output blocks are independent; with the `parallel` feature and
//! `parallelism > 1` they are distributed over a rayon pool.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::matrix::{self, load_into, Matrix, TileGrid, TileRole, TileShape, GRID_DIM, GRID_TILES};
use crate::microkernel::{tile_gemm_accumulate, tile_linear_combine, Tile};
use crate::scalar::{Accumulator, Element};
use crate::schedule::{verify_schedule, Schedule, StrassenInstruction};
use crate::systolic::{run_tile, SystolicConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Host-optimised micro-kernel.
    Fast,
    /// Cycle-level systolic simulation with the given array dimension.
    Systolic { array_dim: usize },
}

pub const DEFAULT_STREAM_DEPTH: usize = 2;

/// Immutable engine settings. Constructed only through [`EngineConfig::new`],
/// which verifies the schedule.
#[derive(Clone, Debug)]
pub struct EngineConfig {
    schedule: Schedule,
    tile_shape: TileShape,
    parallelism: usize,
    backend: Backend,
    stream_depth: usize,
}

impl EngineConfig {
    pub fn new(schedule: Schedule, tile_shape: TileShape) -> Result<Self> {
        let report = verify_schedule(&schedule);
        if !report.passed() {
            return Err(Error::UnverifiedSchedule(report.to_string()));
        }
        if schedule.grid_dim() != GRID_DIM {
            return Err(Error::Config(format!(
                "engine runs 4x4 tile grids, schedule is {0}x{0}",
                schedule.grid_dim()
            )));
        }
        Ok(EngineConfig {
            schedule,
            tile_shape,
            parallelism: 1,
            backend: Backend::Fast,
            stream_depth: DEFAULT_STREAM_DEPTH,
        })
    }

    /// Two-level Strassen with 64x64x64 tiles.
    pub fn strassen2() -> Self {
        Self::new(crate::schedule::strassen2(), TileShape::default()).expect("strassen2 verifies")
    }

    /// Standard 64-product schedule with 64x64x64 tiles.
    pub fn standard() -> Self {
        Self::new(crate::schedule::standard_schedule(GRID_DIM), TileShape::default())
            .expect("standard schedule verifies")
    }

    pub fn with_parallelism(mut self, workers: usize) -> Self {
        self.parallelism = workers.max(1);
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Result<Self> {
        if let Backend::Systolic { array_dim } = backend {
            let s = self.tile_shape;
            SystolicConfig::new(array_dim, s.m_p, s.k_p, s.n_p)?;
        }
        self.backend = backend;
        Ok(self)
    }

    pub fn with_stream_depth(mut self, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("stream depth must be at least 1".into()));
        }
        self.stream_depth = depth;
        Ok(self)
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn tile_shape(&self) -> TileShape {
        self.tile_shape
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn stream_depth(&self) -> usize {
        self.stream_depth
    }
}

/// Bounded FIFO between the multiply stage and the accumulate stage.
#[derive(Debug)]
pub struct IntermediateStream<A> {
    queue: VecDeque<(usize, Tile<A>)>,
    depth: usize,
    high_water: usize,
    next_expected: usize,
}

impl<A> IntermediateStream<A> {
    pub fn new(depth: usize) -> Self {
        IntermediateStream {
            queue: VecDeque::with_capacity(depth),
            depth,
            high_water: 0,
            next_expected: 0,
        }
    }

    pub fn push(&mut self, index: usize, tile: Tile<A>) -> Result<()> {
        if self.queue.len() == self.depth {
            return Err(Error::StreamOverflow(self.depth));
        }
        debug_assert_eq!(index, self.next_expected, "intermediates arrive in schedule order");
        self.next_expected = index + 1;
        self.queue.push_back((index, tile));
        self.high_water = self.high_water.max(self.queue.len());
        Ok(())
    }

    pub fn pop(&mut self) -> Option<(usize, Tile<A>)> {
        self.queue.pop_front()
    }

    pub fn is_full(&self) -> bool {
        self.queue.len() == self.depth
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }
}

/// Counters for one 4x4 block product.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlockStats {
    pub microkernel_calls: usize,
    /// Tile additions/subtractions forming LHS and RHS operands.
    pub add_tiles: usize,
    /// Signed tile accumulations into the C grid.
    pub accumulate_ops: usize,
    pub stream_high_water: usize,
    /// Simulated cycles, systolic backend only.
    pub systolic_cycles: u64,
}

fn multiply<A: Accumulator>(backend: Backend, lhs: &Tile<A>, rhs: &Tile<A>) -> Result<(Tile<A>, u64)> {
    match backend {
        Backend::Fast => {
            let mut out = Tile::zeros(lhs.rows(), rhs.cols());
            tile_gemm_accumulate(&mut out, lhs, rhs)?;
            Ok((out, 0))
        }
        Backend::Systolic { array_dim } => {
            let cfg = SystolicConfig::new(array_dim, lhs.rows(), lhs.cols(), rhs.cols())?;
            // transpose stage ahead of the array
            let (out, stats) = run_tile(&cfg, &lhs.transpose(), rhs)?;
            Ok((out, stats.cycles))
        }
    }
}

fn combine<A: Accumulator>(grid: &TileGrid<A>, ops: &[crate::schedule::SignedOperand]) -> Result<Tile<A>> {
    let refs: Vec<_> = ops.iter().map(|o| (grid.tile(o.row, o.col), o.sign)).collect();
    tile_linear_combine(&refs)
}

fn accumulate<A: Accumulator>(grid_c: &mut TileGrid<A>, ins: &StrassenInstruction, product: &Tile<A>) -> Result<usize> {
    for o in &ins.outputs {
        grid_c.tile_mut(o.row, o.col).add_signed(product, o.sign)?;
    }
    Ok(ins.outputs.len())
}

/// Runs every instruction of the schedule over loaded A and B grids and
/// accumulates into `grid_c`.
pub fn block_multiply<A: Accumulator>(
    grid_a: &TileGrid<A>,
    grid_b: &TileGrid<A>,
    grid_c: &mut TileGrid<A>,
    config: &EngineConfig,
) -> Result<BlockStats> {
    let shape = config.tile_shape;
    for (grid, role) in [(grid_a, TileRole::A), (grid_b, TileRole::B)] {
        if grid.role() != role || grid.shape() != shape {
            return Err(Error::Shape(format!(
                "expected {role:?} grid of {shape:?}, got {:?} grid of {:?}",
                grid.role(),
                grid.shape()
            )));
        }
    }
    if grid_c.role() != TileRole::C || grid_c.shape() != shape {
        return Err(Error::Shape("C grid does not match the engine tile shape".into()));
    }

    let instructions = config.schedule.instructions();
    let mut stream = IntermediateStream::new(config.stream_depth);
    let mut stats = BlockStats::default();
    for (idx, ins) in instructions.iter().enumerate() {
        // LHS and RHS read disjoint buffers and are independent of each other.
        let lhs = combine(grid_a, &ins.lhs)?;
        let rhs = combine(grid_b, &ins.rhs)?;
        stats.add_tiles += ins.lhs.len() - 1 + ins.rhs.len() - 1;

        let (product, cycles) = multiply(config.backend, &lhs, &rhs)?;
        stats.microkernel_calls += 1;
        stats.systolic_cycles += cycles;

        if stream.is_full() {
            let (i, p) = stream.pop().expect("full stream is non-empty");
            stats.accumulate_ops += accumulate(grid_c, &instructions[i], &p)?;
        }
        stream.push(idx, product)?;
    }
    while let Some((i, p)) = stream.pop() {
        stats.accumulate_ops += accumulate(grid_c, &instructions[i], &p)?;
    }
    stats.stream_high_water = stream.high_water();
    Ok(stats)
}

/// Statistics for one block product inside a [`gemm_with_report`] run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockRecord {
    pub block_row: usize,
    pub block_col: usize,
    pub block_inner: usize,
    pub stats: BlockStats,
    /// Copies of each A tile (0..16) then each B tile (16..32) made for this product.
    pub tile_loads: [u32; 2 * GRID_TILES],
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GemmReport {
    pub padded_dims: (usize, usize, usize),
    pub blocks: Vec<BlockRecord>,
}

impl GemmReport {
    pub fn microkernel_calls(&self) -> usize {
        self.blocks.iter().map(|b| b.stats.microkernel_calls).sum()
    }

    pub fn add_tiles(&self) -> usize {
        self.blocks.iter().map(|b| b.stats.add_tiles).sum()
    }

    pub fn accumulate_ops(&self) -> usize {
        self.blocks.iter().map(|b| b.stats.accumulate_ops).sum()
    }

    pub fn stream_high_water(&self) -> usize {
        self.blocks.iter().map(|b| b.stats.stream_high_water).max().unwrap_or(0)
    }

    pub fn systolic_cycles(&self) -> u64 {
        self.blocks.iter().map(|b| b.stats.systolic_cycles).sum()
    }
}

struct OutputBlock<A> {
    row: usize,
    col: usize,
    grid: TileGrid<A>,
    records: Vec<BlockRecord>,
}

fn compute_output_block<E: Element>(
    a: &Matrix<E>,
    b: &Matrix<E>,
    row: usize,
    col: usize,
    inner_blocks: usize,
    config: &EngineConfig,
) -> Result<OutputBlock<E::Acc>> {
    let shape = config.tile_shape;
    let mut grid_c = TileGrid::zeros(shape, TileRole::C);
    let mut grid_a = TileGrid::zeros(shape, TileRole::A);
    let mut grid_b = TileGrid::zeros(shape, TileRole::B);
    let mut records = Vec::with_capacity(inner_blocks);
    for bk in 0..inner_blocks {
        load_into(&mut grid_a, a, row, bk)?;
        load_into(&mut grid_b, b, bk, col)?;
        let stats = block_multiply(&grid_a, &grid_b, &mut grid_c, config)?;
        let mut tile_loads = [0u32; 2 * GRID_TILES];
        tile_loads[..GRID_TILES].copy_from_slice(grid_a.load_counts());
        tile_loads[GRID_TILES..].copy_from_slice(grid_b.load_counts());
        records.push(BlockRecord {
            block_row: row,
            block_col: col,
            block_inner: bk,
            stats,
            tile_loads,
        });
    }
    Ok(OutputBlock {
        row,
        col,
        grid: grid_c,
        records,
    })
}

fn run_blocks<E: Element>(
    a: &Matrix<E>,
    b: &Matrix<E>,
    jobs: &[(usize, usize)],
    inner_blocks: usize,
    config: &EngineConfig,
) -> Result<Vec<OutputBlock<E::Acc>>> {
    #[cfg(feature = "parallel")]
    if config.parallelism > 1 && jobs.len() > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        return pool.install(|| {
            jobs.par_iter()
                .map(|&(r, c)| compute_output_block(a, b, r, c, inner_blocks, config))
                .collect()
        });
    }
    jobs.iter()
        .map(|&(r, c)| compute_output_block(a, b, r, c, inner_blocks, config))
        .collect()
}

/// `C = A * B` in the accumulator type, plus per-block instrumentation.
pub fn gemm_with_report<E: Element>(
    a: &Matrix<E>,
    b: &Matrix<E>,
    config: &EngineConfig,
) -> Result<(Matrix<E::Acc>, GemmReport)> {
    if a.cols() != b.rows() {
        return Err(Error::InnerDimension {
            m: a.rows(),
            k_a: a.cols(),
            k_b: b.rows(),
            n: b.cols(),
        });
    }
    let shape = config.tile_shape;
    let ap = matrix::pad_to_block_multiple(a, shape, TileRole::A)?;
    let bp = matrix::pad_to_block_multiple(b, shape, TileRole::B)?;
    // A's padded k may differ from B's padded k only if k_p differs between
    // roles, which TileShape rules out.
    debug_assert_eq!(ap.cols(), bp.rows());
    let (row_blocks, inner_blocks) = matrix::block_counts(&ap, shape, TileRole::A)?;
    let (_, col_blocks) = matrix::block_counts(&bp, shape, TileRole::B)?;

    let jobs: Vec<(usize, usize)> = (0..row_blocks)
        .flat_map(|r| (0..col_blocks).map(move |c| (r, c)))
        .collect();
    let blocks = run_blocks(&ap, &bp, &jobs, inner_blocks, config)?;

    let mut cp = Matrix::<E::Acc>::zeros(ap.rows(), bp.cols())?;
    let mut report = GemmReport {
        padded_dims: (ap.rows(), ap.cols(), bp.cols()),
        blocks: Vec::with_capacity(jobs.len() * inner_blocks),
    };
    for out in blocks {
        matrix::store_tile_grid(&mut cp, &out.grid, out.row, out.col)?;
        report.blocks.extend(out.records);
    }
    Ok((cp.crop(a.rows(), b.cols())?, report))
}

pub fn gemm<E: Element>(a: &Matrix<E>, b: &Matrix<E>, config: &EngineConfig) -> Result<Matrix<E::Acc>> {
    gemm_with_report(a, b, config).map(|(c, _)| c)
}

/// Micro-kernel invocations for an `m x k x n` product, with each dimension
/// rounded up to the block multiple the engine pads to.
pub fn count_microkernel_calls(m: usize, k: usize, n: usize, config: &EngineConfig) -> usize {
    let s = config.tile_shape;
    let blocks = |d: usize, t: usize| d.div_ceil(GRID_DIM * t);
    blocks(m, s.m_p) * blocks(k, s.k_p) * blocks(n, s.n_p) * config.schedule.len()
}
