//! `sqgemm`: run, benchmark, simulate and model the blocked Strassen GeMM.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or dimension
//! error, 3 I/O or file-format error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sqgemm::bench::{self, Algo, BenchCase, BenchOptions, DEFAULT_SEED};
use sqgemm::engine::gemm_with_report;
use sqgemm::format;
use sqgemm::matrix::naive_gemm;
use sqgemm::microkernel::tile_gemm_accumulate;
use sqgemm::perfmodel::{sweep, PlatformModel, SweepConfig};
use sqgemm::schedule::{op_count_report, size_histogram, verify_schedule, OpCounts, Schedule, VerificationReport};
use sqgemm::systolic::{run_tile, trace_csv, SystolicConfig};
use sqgemm::{Backend, ElemType, Element, Error, Matrix, Scalar, Tile, TileShape};

#[derive(Parser)]
#[command(
    name = "sqgemm",
    version,
    about = "Blocked integer GeMM with two-level Strassen schedules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multiply two matrices and optionally check against the naive product.
    Gemm(GemmArgs),
    /// Time gemm over a list of sizes and print CSV.
    Bench(BenchArgs),
    /// Dump or verify an instruction schedule (JSON).
    Schedule {
        #[command(subcommand)]
        action: ScheduleAction,
    },
    /// Run the cycle-level systolic simulator (CSV).
    Sim {
        #[command(subcommand)]
        action: SimAction,
    },
    /// Predict GOPS curves with the performance model (CSV).
    Model(ModelArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Fast,
    Systolic,
}

#[derive(Args)]
struct GemmArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value = "i16")]
    dtype: ElemType,
    #[arg(long, default_value = "strassen2")]
    algo: Algo,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Left operand file; generated from the seed when absent.
    #[arg(long)]
    a: Option<PathBuf>,
    /// Right operand file; generated from the seed when absent.
    #[arg(long)]
    b: Option<PathBuf>,
    /// Output matrix file (accumulator type).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compare against the naive triple-loop product.
    #[arg(long)]
    verify: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, value_enum, default_value = "fast")]
    backend: BackendArg,
    /// Systolic array dimension for `--backend systolic`.
    #[arg(long, default_value_t = 16)]
    array_dim: usize,
    /// Square tile edge.
    #[arg(long, default_value_t = 64)]
    tile: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Sizes as `N` (square) or `MxKxN`.
    #[arg(long, value_delimiter = ',', default_value = "256,512")]
    sizes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "standard,strassen2")]
    algos: Vec<Algo>,
    #[arg(long, value_delimiter = ',', default_value = "i16")]
    dtypes: Vec<ElemType>,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 64)]
    tile: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScheduleAction {
    /// Print the schedule, one instruction per line.
    Dump {
        #[arg(long, default_value = "strassen2")]
        algo: Algo,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a built-in schedule or a dumped file; exit 1 on failure.
    Verify {
        #[arg(long, default_value = "strassen2", conflicts_with = "file")]
        algo: Algo,
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimShape {
    #[arg(long, default_value_t = 16)]
    array_dim: usize,
    /// Tile rows; defaults to the array dimension.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value = "i16")]
    dtype: ElemType,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SimAction {
    /// Per-cycle register trace of one tile.
    Trace(SimShape),
    /// Cycle statistics of random tiles, checked against the micro-kernel.
    Run {
        #[command(flatten)]
        shape: SimShape,
        #[arg(long, default_value_t = 1)]
        tiles: usize,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Presets: hbm, ddr, compute.
    #[arg(long, value_delimiter = ',', default_value = "hbm")]
    platform: Vec<String>,
    /// key=value platform file; replaces `--platform`.
    #[arg(long)]
    platform_file: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "standard,strassen2")]
    algos: Vec<Algo>,
    #[arg(long, value_delimiter = ',', default_value = "i16")]
    dtypes: Vec<ElemType>,
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048,4096,8192")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    tile: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Verify(String),
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verify(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Lib(Error::Io(_) | Error::Format(_)) => 3,
            Failure::Lib(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Verify(s) | Failure::Usage(s) => s.clone(),
            Failure::Lib(e) => e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn emit(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Lib(e.into())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Lib(e.into())),
    }
}

fn tile_shape(edge: usize) -> Result<TileShape, Failure> {
    Ok(TileShape::square(edge)?)
}

fn load_or<E: Element>(path: Option<&Path>, generated: Matrix<E>) -> Result<Matrix<E>, Failure> {
    match path {
        Some(p) => Ok(format::load(p)?),
        None => Ok(generated),
    }
}

fn check_dim(name: &str, flag: Option<usize>, actual: usize) -> CmdResult {
    match flag {
        Some(v) if v != actual => Err(Failure::Usage(format!(
            "--{name} {v} disagrees with operand file ({actual})"
        ))),
        _ => Ok(()),
    }
}

fn gemm_typed<E: Element>(args: &GemmArgs) -> CmdResult {
    let (a, b) = match (&args.a, &args.b) {
        (Some(pa), Some(pb)) => (format::load(pa)?, format::load(pb)?),
        (pa, pb) => {
            let need = |name: &str, v: Option<usize>| {
                v.ok_or_else(|| Failure::Usage(format!("--{name} is required without both operand files")))
            };
            let (m, k, n) = (need("m", args.m)?, need("k", args.k)?, need("n", args.n)?);
            let (ga, gb) = bench::seeded_operands::<E>(args.seed, m, k, n)?;
            (load_or(pa.as_deref(), ga)?, load_or(pb.as_deref(), gb)?)
        }
    };
    check_dim("m", args.m, a.rows())?;
    check_dim("k", args.k, a.cols())?;
    check_dim("n", args.n, b.cols())?;

    let mut config = args.algo.config(tile_shape(args.tile)?)?.with_parallelism(args.threads);
    if let BackendArg::Systolic = args.backend {
        config = config.with_backend(Backend::Systolic {
            array_dim: args.array_dim,
        })?;
    }
    let t0 = Instant::now();
    let (c, report) = gemm_with_report(&a, &b, &config)?;
    let elapsed = t0.elapsed().as_secs_f64();

    if let Some(out) = &args.out {
        format::save(out, &c)?;
    }
    let mut line = format!(
        "algo={} dtype={} m={} k={} n={} microkernel_calls={} runtime_s={elapsed:.6}",
        args.algo,
        E::TYPE,
        a.rows(),
        a.cols(),
        b.cols(),
        report.microkernel_calls()
    );
    if let Backend::Systolic { .. } = config.backend() {
        line.push_str(&format!(" systolic_cycles={}", report.systolic_cycles()));
    }
    if args.verify {
        let want = naive_gemm(&a, &b)?;
        let diffs: Vec<usize> = (0..want.as_slice().len())
            .filter(|&i| want.as_slice()[i] != c.as_slice()[i])
            .collect();
        if !diffs.is_empty() {
            let mut msg = format!(
                "verification failed: {} of {} entries differ",
                diffs.len(),
                want.as_slice().len()
            );
            for &i in diffs.iter().take(5) {
                let (r, col) = (i / c.cols(), i % c.cols());
                msg.push_str(&format!(
                    "\n  C[{r},{col}] = {} expected {}",
                    c.as_slice()[i].to_i128(),
                    want.as_slice()[i].to_i128()
                ));
            }
            println!("{line} verified=no");
            return Err(Failure::Verify(msg));
        }
        line.push_str(" verified=yes");
    }
    println!("{line}");
    Ok(())
}

fn cmd_gemm(args: &GemmArgs) -> CmdResult {
    match args.dtype {
        ElemType::I8 => gemm_typed::<i8>(args),
        ElemType::I16 => gemm_typed::<i16>(args),
        ElemType::I32 => gemm_typed::<i32>(args),
    }
}

fn parse_size(s: &str) -> Result<(usize, usize, usize), Failure> {
    let bad = || Failure::Usage(format!("size '{s}' is not N or MxKxN"));
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [d] => Ok((d, d, d)),
        [m, k, n] => Ok((m, k, n)),
        _ => Err(bad()),
    }
}

fn cmd_bench(args: &BenchArgs) -> CmdResult {
    let sizes = args
        .sizes
        .iter()
        .map(|s| parse_size(s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cases = Vec::new();
    for &(m, k, n) in &sizes {
        for &elem in &args.dtypes {
            for &algo in &args.algos {
                cases.push(BenchCase { algo, elem, m, k, n });
            }
        }
    }
    let opts = BenchOptions {
        seed: args.seed,
        repetitions: args.repetitions,
        threads: args.threads,
        tile: tile_shape(args.tile)?,
    };
    let rows = bench::run_bench(&cases, &opts)?;
    for r in &rows {
        let c = &r.case;
        eprintln!(
            "{} {} {}x{}x{}: min {:.6} s, median {:.6} s",
            c.algo, c.elem, c.m, c.k, c.n, r.runtime_s_min, r.runtime_s_median
        );
    }
    emit(args.out.as_deref(), &bench::bench_csv(&rows, args.seed))
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    schedule: String,
    grid_dim: usize,
    instructions: usize,
    passed: bool,
    op_counts: OpCounts,
    lhs_sizes: Vec<(usize, usize)>,
    rhs_sizes: Vec<(usize, usize)>,
    #[serde(flatten)]
    report: &'a VerificationReport,
}

fn cmd_schedule(action: &ScheduleAction) -> CmdResult {
    match action {
        ScheduleAction::Dump { algo, out } => emit(out.as_deref(), &algo.schedule().to_json()),
        ScheduleAction::Verify { algo, file } => {
            let (name, s) = match file {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| Failure::Lib(e.into()))?;
                    (p.display().to_string(), Schedule::from_json(&text)?)
                }
                None => (algo.name().to_string(), algo.schedule()),
            };
            let report = verify_schedule(&s);
            let out = VerifyOutput {
                schedule: name,
                grid_dim: s.grid_dim(),
                instructions: s.len(),
                passed: report.passed(),
                op_counts: op_count_report(&s),
                lhs_sizes: size_histogram(&s, |i| i.lhs.len()).into_iter().collect(),
                rhs_sizes: size_histogram(&s, |i| i.rhs.len()).into_iter().collect(),
                report: &report,
            };
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Verify(format!("schedule fails verification: {report}")))
            }
        }
    }
}

fn widen_tile<E: Element>(m: &Matrix<E>) -> Tile<E::Acc> {
    Tile::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j).widen())
}

type SimOperands<A> = (SystolicConfig, Tile<A>, Tile<A>);

fn sim_operands<E: Element>(shape: &SimShape, seed: u64) -> Result<SimOperands<E::Acc>, Failure> {
    let d = shape.array_dim;
    let (m, k, n) = (shape.m.unwrap_or(d), shape.k.unwrap_or(d), shape.n.unwrap_or(d));
    let cfg = SystolicConfig::new(d, m, k, n)?;
    let (a, b) = bench::seeded_operands::<E>(seed, m, k, n)?;
    Ok((cfg, widen_tile(&a), widen_tile(&b)))
}

const SIM_HEADER: &str =
    "tile,array_dim,m,k,n,cycles,fill_cycles,drain_cycles,steady_cycles,macs,peak_macs_per_cycle,matches_microkernel";

fn sim_typed<E: Element>(action: &SimAction) -> CmdResult {
    match action {
        SimAction::Trace(shape) => {
            let (cfg, l, r) = sim_operands::<E>(shape, shape.seed)?;
            emit(shape.out.as_deref(), &trace_csv(&cfg, &l.transpose(), &r)?)
        }
        SimAction::Run { shape, tiles } => {
            let mut csv = format!("{SIM_HEADER}\n");
            let mut mismatches = 0;
            for t in 0..*tiles {
                let (cfg, l, r) = sim_operands::<E>(shape, shape.seed.wrapping_add(t as u64))?;
                let (got, stats) = run_tile(&cfg, &l.transpose(), &r)?;
                let mut want = Tile::zeros(l.rows(), r.cols());
                tile_gemm_accumulate(&mut want, &l, &r)?;
                let ok = got == want;
                mismatches += usize::from(!ok);
                csv.push_str(&format!(
                    "{t},{},{},{},{},{},{},{},{},{},{},{}\n",
                    shape.array_dim,
                    l.rows(),
                    l.cols(),
                    r.cols(),
                    stats.cycles,
                    stats.fill_cycles,
                    stats.drain_cycles,
                    stats.steady_cycles(),
                    stats.macs,
                    stats.peak_macs_per_cycle,
                    ok
                ));
            }
            emit(shape.out.as_deref(), &csv)?;
            if mismatches > 0 {
                return Err(Failure::Verify(format!(
                    "{mismatches} tiles differ from the micro-kernel"
                )));
            }
            Ok(())
        }
    }
}

fn cmd_sim(action: &SimAction) -> CmdResult {
    let dtype = match action {
        SimAction::Trace(s) | SimAction::Run { shape: s, .. } => s.dtype,
    };
    match dtype {
        ElemType::I8 => sim_typed::<i8>(action),
        ElemType::I16 => sim_typed::<i16>(action),
        ElemType::I32 => sim_typed::<i32>(action),
    }
}

fn cmd_model(args: &ModelArgs) -> CmdResult {
    let platforms = match &args.platform_file {
        Some(p) => vec![PlatformModel::load(p)?],
        None => args
            .platform
            .iter()
            .map(|name| PlatformModel::preset(name).ok_or_else(|| Failure::Usage(format!("unknown platform '{name}'"))))
            .collect::<Result<_, _>>()?,
    };
    let tile = tile_shape(args.tile)?;
    let mut configs = Vec::new();
    for platform in &platforms {
        for &algo in &args.algos {
            for &elem in &args.dtypes {
                configs.push(SweepConfig {
                    algo: algo.name().into(),
                    schedule: algo.schedule(),
                    platform: platform.clone(),
                    elem,
                    tile,
                });
            }
        }
    }
    let sizes: Vec<_> = args.sizes.iter().map(|&n| (n, n, n)).collect();
    let rows = sweep(&sizes, &configs)?;
    emit(args.out.as_deref(), &bench::model_csv(&rows))
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Gemm(a) => cmd_gemm(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Schedule { action } => cmd_schedule(action),
        Command::Sim { action } => cmd_sim(action),
        Command::Model(a) => cmd_model(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
