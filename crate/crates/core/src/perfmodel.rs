//! Analytic transaction-level performance model of the hardware kernel.
//!
//! Each 4x4 block product is a dataflow iteration with five stages:
//!
//! | stage      | per iteration                                                  |
//! |------------|----------------------------------------------------------------|
//! | load       | A and B grids over external-memory bursts                      |
//! | compute    | `calls * m_p*k_p*n_p / D^2` plus one `2*D` array fill          |
//! | add        | LHS/RHS tile additions, `D` elements per cycle per side        |
//! | accumulate | signed accumulations into the C buffers, `D` elements/cycle    |
//! | store      | C grid write-back, amortised over the inner-block loop         |
//!
//! Stages overlap, so `N` iterations take `sum(t_s) + (N - 1) * max(t_s)`
//! cycles: one full pass to fill the pipeline, then the bottleneck stage.
//!
//! Memory behaviour follows two load patterns. The standard kernel streams
//! individual tiles (bursts of `k_p` / `n_p` elements); Strassen schedules
//! buffer whole 4x4 grids (bursts of `4*k_p` / `4*n_p`). Bursts shorter than
//! `narrow_burst_threshold_bytes` move one element per cycle. When the three
//! matrices together exceed one memory bank, every burst pays
//! `bank_switch_penalty_cycles`; this is a modelled conjecture about
//! multi-bank addressing, not a measured effect, and reports flag it.
//!
//! `burst_setup_cycles` and `bank_switch_penalty_cycles` are uncalibrated
//! estimates. Only the compute ceilings are meant to match hardware figures.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{TileShape, GRID_DIM};
use crate::scalar::ElemType;
use crate::schedule::{op_count_report, Schedule};

const MIB: u64 = 1 << 20;
const GIB: u64 = 1 << 30;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlatformModel {
    pub name: String,
    pub frequency_hz: f64,
    pub array_dim: usize,
    pub bytes_per_cycle_per_channel: f64,
    pub channel_count: usize,
    pub bank_capacity_bytes: u64,
    pub bank_switch_penalty_cycles: u64,
    pub burst_setup_cycles: u64,
    pub narrow_burst_threshold_bytes: u64,
    pub narrow_burst_penalty: bool,
}

impl PlatformModel {
    /// HBM interface: 256 MiB banks, one channel each for A, B and C.
    pub fn hbm() -> Self {
        PlatformModel {
            name: "hbm".into(),
            frequency_hz: 275e6,
            array_dim: 16,
            bytes_per_cycle_per_channel: 32.0,
            channel_count: 3,
            bank_capacity_bytes: 256 * MIB,
            bank_switch_penalty_cycles: 256,
            burst_setup_cycles: 32,
            narrow_burst_threshold_bytes: 128,
            narrow_burst_penalty: true,
        }
    }

    /// DDR interface: a single 16 GiB bank shared by all three matrices.
    pub fn ddr() -> Self {
        PlatformModel {
            name: "ddr".into(),
            bytes_per_cycle_per_channel: 16.0,
            channel_count: 1,
            bank_capacity_bytes: 16 * GIB,
            ..Self::hbm()
        }
    }

    /// Unlimited bandwidth and no bank effects: isolates the compute stages.
    pub fn compute_bound() -> Self {
        PlatformModel {
            name: "compute".into(),
            bytes_per_cycle_per_channel: f64::INFINITY,
            channel_count: 3,
            bank_capacity_bytes: u64::MAX,
            bank_switch_penalty_cycles: 0,
            burst_setup_cycles: 0,
            narrow_burst_penalty: false,
            ..Self::hbm()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "hbm" => Some(Self::hbm()),
            "ddr" => Some(Self::ddr()),
            "compute" | "compute_bound" => Some(Self::compute_bound()),
            _ => None,
        }
    }

    /// Peak GOPS of the standard kernel: `2 * D^2 * f`.
    pub fn compute_ceiling_gops(&self) -> f64 {
        2.0 * (self.array_dim * self.array_dim) as f64 * self.frequency_hz * 1e-9
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("platform {}: {what}", self.name)));
        if !self.frequency_hz.is_finite() || self.frequency_hz <= 0.0 {
            return bad("frequency_hz must be positive");
        }
        if self.array_dim == 0 {
            return bad("array_dim must be positive");
        }
        if self.bytes_per_cycle_per_channel.is_nan() || self.bytes_per_cycle_per_channel <= 0.0 {
            return bad("bytes_per_cycle_per_channel must be positive");
        }
        if self.channel_count == 0 {
            return bad("channel_count must be positive");
        }
        if self.bank_capacity_bytes == 0 {
            return bad("bank_capacity_bytes must be positive");
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. A `base` key picks
    /// the preset the remaining keys override (default `hbm`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut base = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Platform {
                line: n + 1,
                msg: "expected key=value".into(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k == "base" {
                base = Some((n + 1, v.to_string()));
            } else {
                entries.push((n + 1, k.to_string(), v.to_string()));
            }
        }
        let mut p = match base {
            Some((line, name)) => Self::preset(&name).ok_or_else(|| Error::Platform {
                line,
                msg: format!("unknown preset '{name}'"),
            })?,
            None => Self::hbm(),
        };
        for (line, key, value) in entries {
            let err = |msg: String| Error::Platform { line, msg };
            let num = |v: &str| v.parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
            let int = |v: &str| v.parse::<u64>().map_err(|e| err(format!("{key}: {e}")));
            match key.as_str() {
                "name" => p.name = value,
                "frequency_hz" => p.frequency_hz = num(&value)?,
                "frequency_mhz" => p.frequency_hz = num(&value)? * 1e6,
                "array_dim" => p.array_dim = int(&value)? as usize,
                "bytes_per_cycle_per_channel" => p.bytes_per_cycle_per_channel = num(&value)?,
                "channel_count" => p.channel_count = int(&value)? as usize,
                "bank_capacity_bytes" => p.bank_capacity_bytes = parse_bytes(&value).map_err(err)?,
                "bank_switch_penalty_cycles" => p.bank_switch_penalty_cycles = int(&value)?,
                "burst_setup_cycles" => p.burst_setup_cycles = int(&value)?,
                "narrow_burst_threshold_bytes" => p.narrow_burst_threshold_bytes = int(&value)?,
                "narrow_burst_penalty" => {
                    p.narrow_burst_penalty = value
                        .parse()
                        .map_err(|_| err(format!("{key}: expected true or false")))?
                }
                _ => return Err(err(format!("unknown key '{key}'"))),
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "name = {}\nfrequency_hz = {}\narray_dim = {}\nbytes_per_cycle_per_channel = {}\n\
             channel_count = {}\nbank_capacity_bytes = {}\nbank_switch_penalty_cycles = {}\n\
             burst_setup_cycles = {}\nnarrow_burst_threshold_bytes = {}\nnarrow_burst_penalty = {}\n",
            self.name,
            self.frequency_hz,
            self.array_dim,
            self.bytes_per_cycle_per_channel,
            self.channel_count,
            self.bank_capacity_bytes,
            self.bank_switch_penalty_cycles,
            self.burst_setup_cycles,
            self.narrow_burst_threshold_bytes,
            self.narrow_burst_penalty
        )
    }
}

fn parse_bytes(v: &str) -> std::result::Result<u64, String> {
    let v = v.trim();
    let (digits, mult) = if let Some(d) = v.strip_suffix("GiB") {
        (d, GIB)
    } else if let Some(d) = v.strip_suffix("MiB") {
        (d, MIB)
    } else if let Some(d) = v.strip_suffix("KiB") {
        (d, 1 << 10)
    } else {
        (v, 1)
    };
    digits
        .trim()
        .parse::<u64>()
        .ok()
        .and_then(|d| d.checked_mul(mult))
        .ok_or_else(|| format!("bad byte count '{v}'"))
}

/// How the kernel pulls tiles from external memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LoadPolicy {
    /// One tile at a time: bursts of `k_p` (A) / `n_p` (B, C) elements.
    PerTile,
    /// Whole 4x4 grids row by row: bursts of `4*k_p` / `4*n_p` elements.
    GridRows,
}

impl LoadPolicy {
    /// Single-operand schedules stream tiles; anything with operand sums
    /// needs the whole grid on chip.
    pub fn for_schedule(s: &Schedule) -> Self {
        let single = s
            .instructions()
            .iter()
            .all(|i| i.lhs.len() == 1 && i.rhs.len() == 1 && i.outputs.len() == 1);
        if single {
            LoadPolicy::PerTile
        } else {
            LoadPolicy::GridRows
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Stage {
    Load,
    Compute,
    Add,
    Accumulate,
    Store,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Load, Stage::Compute, Stage::Add, Stage::Accumulate, Stage::Store];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Compute => "compute",
            Stage::Add => "add",
            Stage::Accumulate => "accumulate",
            Stage::Store => "store",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleReport {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub block_products: u64,
    /// Stage totals over the whole run.
    pub load_cycles: u64,
    pub compute_cycles: u64,
    pub add_cycles: u64,
    pub accumulate_cycles: u64,
    pub store_cycles: u64,
    pub total_cycles: u64,
    pub runtime_s: f64,
    pub gops: f64,
    pub bottleneck: Stage,
    /// Cycles of load/store attributable to the bank-switch penalty. Non-zero
    /// only when the modelled (conjectured) multi-bank path is active.
    pub bank_penalty_cycles: u64,
}

impl CycleReport {
    pub fn stage_cycles(&self, s: Stage) -> u64 {
        match s {
            Stage::Load => self.load_cycles,
            Stage::Compute => self.compute_cycles,
            Stage::Add => self.add_cycles,
            Stage::Accumulate => self.accumulate_cycles,
            Stage::Store => self.store_cycles,
        }
    }

    pub fn bank_penalty_active(&self) -> bool {
        self.bank_penalty_cycles > 0
    }

    /// Bottleneck name, suffixed `+bank_penalty` when the penalty path is on.
    pub fn bottleneck_label(&self) -> String {
        if self.bank_penalty_active() {
            format!("{}+bank_penalty", self.bottleneck)
        } else {
            self.bottleneck.to_string()
        }
    }
}

struct Bursts {
    count: u64,
    elems: u64,
}

struct MemCost {
    cycles: u64,
    penalty: u64,
}

fn burst_cost(b: &Bursts, elem_bytes: u64, p: &PlatformModel, bank_penalty: bool) -> MemCost {
    let bytes = b.elems * elem_bytes;
    let bw = if p.narrow_burst_penalty && bytes < p.narrow_burst_threshold_bytes {
        p.bytes_per_cycle_per_channel.min(elem_bytes as f64)
    } else {
        p.bytes_per_cycle_per_channel
    };
    let beats = if bw.is_infinite() {
        0
    } else {
        (bytes as f64 / bw).ceil() as u64
    };
    let penalty = if bank_penalty { p.bank_switch_penalty_cycles } else { 0 };
    MemCost {
        cycles: b.count * (p.burst_setup_cycles + beats + penalty),
        penalty: b.count * penalty,
    }
}

/// Bursts to move one 4x4 grid whose tiles are `rows x cols`.
fn grid_bursts(policy: LoadPolicy, rows: usize, cols: usize) -> Bursts {
    let g = GRID_DIM as u64;
    let (rows, cols) = (rows as u64, cols as u64);
    match policy {
        LoadPolicy::PerTile => Bursts {
            count: g * g * rows,
            elems: cols,
        },
        LoadPolicy::GridRows => Bursts {
            count: g * rows,
            elems: g * cols,
        },
    }
}

/// Predicts cycles and GOPS for an `m x k x n` product. Dimensions must
/// already be multiples of the 4x4 block.
pub fn predict(
    m: usize,
    k: usize,
    n: usize,
    schedule: &Schedule,
    tile: TileShape,
    platform: &PlatformModel,
    elem: ElemType,
) -> Result<CycleReport> {
    predict_with_policy(
        m,
        k,
        n,
        schedule,
        tile,
        platform,
        elem,
        LoadPolicy::for_schedule(schedule),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn predict_with_policy(
    m: usize,
    k: usize,
    n: usize,
    schedule: &Schedule,
    tile: TileShape,
    platform: &PlatformModel,
    elem: ElemType,
    policy: LoadPolicy,
) -> Result<CycleReport> {
    platform.validate()?;
    let g = GRID_DIM;
    for (d, t, name) in [(m, tile.m_p, "m"), (k, tile.k_p, "k"), (n, tile.n_p, "n")] {
        if d == 0 || d % (g * t) != 0 {
            return Err(Error::Shape(format!(
                "{name} = {d} is not a positive multiple of the block size {}",
                g * t
            )));
        }
    }
    let (mb, kb, nb) = (
        (m / (g * tile.m_p)) as u64,
        (k / (g * tile.k_p)) as u64,
        (n / (g * tile.n_p)) as u64,
    );
    let iterations = mb * kb * nb;
    let elem_bytes = elem.bytes() as u64;
    let d = platform.array_dim as u64;

    let footprint = ((m * k + k * n + m * n) as u64).saturating_mul(elem_bytes);
    let bank_penalty = footprint > platform.bank_capacity_bytes;

    let a = burst_cost(
        &grid_bursts(policy, tile.m_p, tile.k_p),
        elem_bytes,
        platform,
        bank_penalty,
    );
    let b = burst_cost(
        &grid_bursts(policy, tile.k_p, tile.n_p),
        elem_bytes,
        platform,
        bank_penalty,
    );
    let c = burst_cost(
        &grid_bursts(policy, tile.m_p, tile.n_p),
        elem_bytes,
        platform,
        bank_penalty,
    );
    let (load, load_penalty) = if platform.channel_count >= 2 {
        (a.cycles.max(b.cycles), a.penalty.max(b.penalty))
    } else {
        (a.cycles + b.cycles, a.penalty + b.penalty)
    };
    let store = c.cycles.div_ceil(kb);

    let ops = op_count_report(schedule);
    let tile_macs = (tile.m_p * tile.k_p * tile.n_p) as u64;
    let compute = ops.multiplications as u64 * tile_macs.div_ceil(d * d) + 2 * d;
    let lhs_elems = (ops.lhs_adds * tile.m_p * tile.k_p) as u64;
    let rhs_elems = (ops.rhs_adds * tile.k_p * tile.n_p) as u64;
    let add = lhs_elems.max(rhs_elems).div_ceil(d);
    let accumulate = ((ops.output_accumulations * tile.m_p * tile.n_p) as u64).div_ceil(d);

    let per_iter = [load, compute, add, accumulate, store];
    let (bottleneck, &peak) = Stage::ALL
        .iter()
        .zip(per_iter.iter())
        .max_by_key(|(_, &c)| c)
        .map(|(s, c)| (*s, c))
        .expect("five stages");
    let total = per_iter.iter().sum::<u64>() + (iterations - 1) * peak;

    let runtime_s = total as f64 / platform.frequency_hz;
    let ops_nominal = 2.0 * m as f64 * k as f64 * n as f64;
    Ok(CycleReport {
        m,
        k,
        n,
        block_products: iterations,
        load_cycles: load * iterations,
        compute_cycles: compute * iterations,
        add_cycles: add * iterations,
        accumulate_cycles: accumulate * iterations,
        store_cycles: store * iterations,
        total_cycles: total,
        runtime_s,
        gops: ops_nominal / runtime_s * 1e-9,
        bottleneck,
        bank_penalty_cycles: load_penalty * iterations + c.penalty * mb * nb,
    })
}

/// One column of a sweep.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub algo: String,
    pub schedule: Schedule,
    pub platform: PlatformModel,
    pub elem: ElemType,
    pub tile: TileShape,
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub algo: String,
    pub platform: String,
    pub elem: ElemType,
    pub report: CycleReport,
}

/// Cross product of sizes and configurations, sizes outer. Each size is
/// rounded up to the configuration's block multiple.
pub fn sweep(sizes: &[(usize, usize, usize)], configs: &[SweepConfig]) -> Result<Vec<SweepRow>> {
    let jobs: Vec<_> = sizes
        .iter()
        .flat_map(|&s| configs.iter().map(move |c| (s, c)))
        .collect();
    let run = |&((m, k, n), cfg): &((usize, usize, usize), &SweepConfig)| -> Result<SweepRow> {
        let t = cfg.tile;
        let up = |d: usize, t: usize| d.max(1).next_multiple_of(GRID_DIM * t);
        let report = predict(
            up(m, t.m_p),
            up(k, t.k_p),
            up(n, t.n_p),
            &cfg.schedule,
            t,
            &cfg.platform,
            cfg.elem,
        )?;
        Ok(SweepRow {
            algo: cfg.algo.clone(),
            platform: cfg.platform.name.clone(),
            elem: cfg.elem,
            report,
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter().map(run).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{standard_schedule, strassen2};
    use proptest::prelude::*;

    fn tile() -> TileShape {
        TileShape::default()
    }

    fn std4() -> Schedule {
        standard_schedule(4)
    }

    #[test]
    fn standard_int16_reaches_the_compute_ceiling() {
        let p = PlatformModel::hbm();
        let ceiling = p.compute_ceiling_gops();
        assert!((ceiling - 140.8).abs() < 1e-9);
        let r = predict(4096, 4096, 4096, &std4(), tile(), &p, ElemType::I16).unwrap();
        assert_eq!(r.bottleneck, Stage::Compute);
        assert!(!r.bank_penalty_active());
        assert!((r.gops - ceiling).abs() / ceiling < 0.01, "{}", r.gops);
    }

    #[test]
    fn strassen_bound_and_advantage() {
        let p = PlatformModel::hbm();
        let bound = p.compute_ceiling_gops() * 64.0 / 49.0;
        for n in [256, 512, 1024, 2048, 4096] {
            let s = predict(n, n, n, &strassen2(), tile(), &p, ElemType::I16).unwrap();
            let b = predict(n, n, n, &std4(), tile(), &p, ElemType::I16).unwrap();
            assert!(s.gops <= bound);
            assert!(s.gops > b.gops, "n={n}: {} vs {}", s.gops, b.gops);
        }
    }

    #[test]
    fn bank_penalty_only_on_hbm_past_capacity() {
        let n = 8192;
        for schedule in [std4(), strassen2()] {
            let h = predict(n, n, n, &schedule, tile(), &PlatformModel::hbm(), ElemType::I16).unwrap();
            let d = predict(n, n, n, &schedule, tile(), &PlatformModel::ddr(), ElemType::I16).unwrap();
            assert!(h.bank_penalty_active());
            assert!(!d.bank_penalty_active());
            assert!(h.total_cycles > d.total_cycles);
            assert!(h.bottleneck_label().ends_with("+bank_penalty"));
        }
        let below = predict(4096, 4096, 4096, &std4(), tile(), &PlatformModel::hbm(), ElemType::I16).unwrap();
        assert!(!below.bank_penalty_active());
    }

    #[test]
    fn narrow_bursts_hurt_only_the_standard_kernel() {
        let p = PlatformModel::hbm();
        let n = 2048;
        let std8 = predict(n, n, n, &std4(), tile(), &p, ElemType::I8).unwrap();
        let std16 = predict(n, n, n, &std4(), tile(), &p, ElemType::I16).unwrap();
        let s8 = predict(n, n, n, &strassen2(), tile(), &p, ElemType::I8).unwrap();
        assert_eq!(std8.bottleneck, Stage::Load);
        assert!(std8.gops < std16.gops);
        assert!(std8.gops < s8.gops);
        let mut off = p.clone();
        off.narrow_burst_penalty = false;
        let std8_off = predict(n, n, n, &std4(), tile(), &off, ElemType::I8).unwrap();
        assert!(std8_off.gops > std8.gops);
    }

    #[test]
    fn rejects_unpadded_dims() {
        let p = PlatformModel::hbm();
        assert!(predict(300, 256, 256, &std4(), tile(), &p, ElemType::I8).is_err());
        assert!(predict(0, 256, 256, &std4(), tile(), &p, ElemType::I8).is_err());
    }

    #[test]
    fn load_policy_follows_schedule() {
        assert_eq!(LoadPolicy::for_schedule(&std4()), LoadPolicy::PerTile);
        assert_eq!(LoadPolicy::for_schedule(&strassen2()), LoadPolicy::GridRows);
    }

    #[test]
    fn single_block_total_is_stage_sum() {
        let r = predict(256, 256, 256, &std4(), tile(), &PlatformModel::hbm(), ElemType::I16).unwrap();
        let sum: u64 = Stage::ALL.iter().map(|&s| r.stage_cycles(s)).sum();
        assert_eq!(r.total_cycles, sum);
        assert_eq!(r.compute_cycles, 64 * 1024 + 32);
        // 1024 bursts of 64 i16 (128 B) at 32 B/cycle after a 32-cycle setup
        assert_eq!(r.load_cycles, 1024 * (32 + 4));
    }

    #[test]
    fn platform_file_round_trip() {
        let p = PlatformModel::ddr();
        assert_eq!(PlatformModel::parse(&p.to_config_string()).unwrap(), p);
        let q =
            PlatformModel::parse("base = ddr\n# comment\nfrequency_mhz = 300\nbank_capacity_bytes = 1GiB\n").unwrap();
        assert_eq!(q.frequency_hz, 300e6);
        assert_eq!(q.bank_capacity_bytes, GIB);
        assert_eq!(q.channel_count, 1);
        assert!(matches!(
            PlatformModel::parse("frequency_hz = fast"),
            Err(Error::Platform { line: 1, .. })
        ));
        assert!(PlatformModel::parse("wat = 3").is_err());
        assert!(PlatformModel::parse("array_dim").is_err());
        assert!(PlatformModel::parse("channel_count = 0").is_err());
    }

    #[test]
    fn sweep_shapes() {
        let cfg = SweepConfig {
            algo: "strassen2".into(),
            schedule: strassen2(),
            platform: PlatformModel::ddr(),
            elem: ElemType::I16,
            tile: tile(),
        };
        assert!(sweep(&[], std::slice::from_ref(&cfg)).unwrap().is_empty());
        let rows = sweep(&[(300, 300, 300)], &[cfg]).unwrap();
        assert_eq!(rows[0].report.m, 512);
    }

    proptest! {
        #[test]
        fn report_invariants(
            e in 1usize..5,
            kb in 1usize..5,
            elem in prop::sample::select(ElemType::ALL.to_vec()),
            strassen in any::<bool>(),
            hbm in any::<bool>(),
        ) {
            let n = 256 * e;
            let k = 256 * kb;
            let s = if strassen { strassen2() } else { std4() };
            let p = if hbm { PlatformModel::hbm() } else { PlatformModel::ddr() };
            let r = predict(n, k, n, &s, tile(), &p, elem).unwrap();
            let stages: Vec<u64> = Stage::ALL.iter().map(|&s| r.stage_cycles(s)).collect();
            prop_assert!(r.total_cycles >= *stages.iter().max().unwrap());
            prop_assert!(r.total_cycles <= stages.iter().sum::<u64>());
            let nominal = 2.0 * (n * k * n) as f64;
            prop_assert!(((r.gops * r.runtime_s * 1e9) - nominal).abs() / nominal <= 1e-9);
        }

        #[test]
        fn faster_hardware_never_slows_down(
            e in 1usize..9,
            f1 in 100.0f64..500.0,
            df in 0.0f64..200.0,
            d_idx in 0usize..5,
            strassen in any::<bool>(),
        ) {
            let n = 256 * e;
            let s = if strassen { strassen2() } else { std4() };
            let dims = [2usize, 4, 8, 16, 32, 64];
            let mut p = PlatformModel::hbm();
            p.frequency_hz = f1 * 1e6;
            p.array_dim = dims[d_idx];
            let slow = predict(n, n, n, &s, tile(), &p, ElemType::I16).unwrap();
            let mut q = p.clone();
            q.frequency_hz += df * 1e6;
            prop_assert!(predict(n, n, n, &s, tile(), &q, ElemType::I16).unwrap().runtime_s <= slow.runtime_s);
            let mut q = p.clone();
            q.array_dim = dims[d_idx + 1];
            prop_assert!(predict(n, n, n, &s, tile(), &q, ElemType::I16).unwrap().runtime_s <= slow.runtime_s);
        }

        #[test]
        fn hbm_never_loses_to_ddr_below_capacity(
            e in 1usize..17,
            elem in prop::sample::select(ElemType::ALL.to_vec()),
            strassen in any::<bool>(),
        ) {
            let n = 256 * e;
            let s = if strassen { strassen2() } else { std4() };
            let h = predict(n, n, n, &s, tile(), &PlatformModel::hbm(), elem).unwrap();
            let d = predict(n, n, n, &s, tile(), &PlatformModel::ddr(), elem).unwrap();
            prop_assume!(!h.bank_penalty_active());
            prop_assert!(h.gops >= d.gops);
        }
    }
}
