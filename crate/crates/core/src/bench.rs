//! Seeded benchmark runs and the CSV formats shared by the CLI.
//!
//! Operands come from a `ChaCha8Rng` seeded with a 64-bit value; A is drawn
//! before B, row-major. Every CSV starts with a `#` metadata row naming the
//! generator and seed. Only the `runtime_s_median` and `gops` bench columns
//! depend on wall-clock time.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{count_microkernel_calls, gemm_with_report, EngineConfig};
use crate::error::{Error, Result};
use crate::matrix::{Matrix, TileShape, GRID_DIM};
use crate::perfmodel::SweepRow;
use crate::scalar::{ElemType, Element};
use crate::schedule::{self, Schedule};

/// Seed used when none is given: ASCII "SGMM".
pub const DEFAULT_SEED: u64 = 0x5347_4D4D;

pub const RNG_NAME: &str = "chacha8";

pub const BENCH_HEADER: &str = "algo,dtype,m,k,n,runtime_s_median,gops,microkernel_calls";

pub const MODEL_HEADER: &str = "platform,algo,dtype,n,predicted_gops,bottleneck_stage";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    /// 64 products over the 4x4 grid.
    Standard,
    /// One Strassen level over 2x2 standard blocks: 56 products.
    Strassen1,
    /// Two Strassen levels: 49 products.
    Strassen2,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Standard, Algo::Strassen1, Algo::Strassen2];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Standard => "standard",
            Algo::Strassen1 => "strassen1",
            Algo::Strassen2 => "strassen2",
        }
    }

    pub fn schedule(self) -> Schedule {
        match self {
            Algo::Standard => schedule::standard_schedule(GRID_DIM),
            Algo::Strassen1 => schedule::strassen1(),
            Algo::Strassen2 => schedule::strassen2(),
        }
    }

    pub fn config(self, tile: TileShape) -> Result<EngineConfig> {
        EngineConfig::new(self.schedule(), tile)
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm '{s}' (standard, strassen1, strassen2)"))
    }
}

/// Seeded `m x k` and `k x n` operands.
pub fn seeded_operands<E: Element>(seed: u64, m: usize, k: usize, n: usize) -> Result<(Matrix<E>, Matrix<E>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::random(m, k, &mut rng)?;
    let b = Matrix::random(k, n, &mut rng)?;
    Ok((a, b))
}

/// Median of the samples; the mean of the two middle values for even counts.
pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    Some(if s.len() % 2 == 1 {
        s[mid]
    } else {
        (s[mid - 1] + s[mid]) / 2.0
    })
}

/// `2mkn / t`, in GOPS.
pub fn gops(m: usize, k: usize, n: usize, seconds: f64) -> f64 {
    2.0 * m as f64 * k as f64 * n as f64 / seconds * 1e-9
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchCase {
    pub algo: Algo,
    pub elem: ElemType,
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub case: BenchCase,
    pub runtime_s_median: f64,
    pub runtime_s_min: f64,
    pub gops: f64,
    pub microkernel_calls: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct BenchOptions {
    pub seed: u64,
    pub repetitions: usize,
    pub threads: usize,
    pub tile: TileShape,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            seed: DEFAULT_SEED,
            repetitions: 3,
            threads: 1,
            tile: TileShape::default(),
        }
    }
}

fn time_case<E: Element>(case: &BenchCase, opts: &BenchOptions) -> Result<BenchRow> {
    let config = case.algo.config(opts.tile)?.with_parallelism(opts.threads);
    let (a, b) = seeded_operands::<E>(opts.seed, case.m, case.k, case.n)?;
    let mut times = Vec::with_capacity(opts.repetitions);
    let mut calls = 0;
    for _ in 0..opts.repetitions {
        let t0 = Instant::now();
        let (_, report) = gemm_with_report(&a, &b, &config)?;
        times.push(t0.elapsed().as_secs_f64());
        calls = report.microkernel_calls();
    }
    debug_assert_eq!(calls, count_microkernel_calls(case.m, case.k, case.n, &config));
    let med = median(&times).expect("at least one repetition");
    Ok(BenchRow {
        case: *case,
        runtime_s_median: med,
        runtime_s_min: times.iter().copied().fold(f64::INFINITY, f64::min),
        gops: gops(case.m, case.k, case.n, med),
        microkernel_calls: calls,
    })
}

/// Times every case `repetitions` times, in order.
pub fn run_bench(cases: &[BenchCase], opts: &BenchOptions) -> Result<Vec<BenchRow>> {
    if opts.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    cases
        .iter()
        .map(|c| match c.elem {
            ElemType::I8 => time_case::<i8>(c, opts),
            ElemType::I16 => time_case::<i16>(c, opts),
            ElemType::I32 => time_case::<i32>(c, opts),
        })
        .collect()
}

fn metadata(seed: u64) -> String {
    format!("# rng={RNG_NAME} seed={seed:#x}\n")
}

pub fn bench_csv(rows: &[BenchRow], seed: u64) -> String {
    let mut out = metadata(seed);
    out.push_str(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        let c = &r.case;
        writeln!(
            out,
            "{},{},{},{},{},{:.9},{:.3},{}",
            c.algo, c.elem, c.m, c.k, c.n, r.runtime_s_median, r.gops, r.microkernel_calls
        )
        .unwrap();
    }
    out
}

/// One row per sweep entry; `n` is the (padded) output column count.
pub fn model_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(MODEL_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.3},{}",
            r.platform,
            r.algo,
            r.elem,
            r.report.n,
            r.report.gops,
            r.report.bottleneck_label()
        )
        .unwrap();
    }
    out
}
