//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Oracles here are written against plain slices and `i128`, independent of
//! the crate's own naive product.

use std::time::{Duration, Instant};

use sqgemm::bench::{bench_csv, model_csv, run_bench, seeded_operands, Algo, BenchCase, BenchOptions};
use sqgemm::engine::{count_microkernel_calls, gemm_with_report};
use sqgemm::microkernel::tile_gemm_accumulate;
use sqgemm::perfmodel::{predict, sweep, PlatformModel, SweepConfig};
use sqgemm::schedule::{self, verify_schedule, Schedule};
use sqgemm::systolic::{run_tile, SystolicConfig};
use sqgemm::{ElemType, Element, EngineConfig, Matrix, Tile, TileShape};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle<E>(a: &Matrix<E>, b: &Matrix<E>) -> Vec<i128>
where
    E: Element + Into<i128>,
{
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let (av, bv) = (a.as_slice(), b.as_slice());
    let mut c = vec![0i128; m * n];
    for i in 0..m {
        for p in 0..k {
            let x: i128 = av[i * k + p].into();
            for j in 0..n {
                c[i * n + j] += x * bv[p * n + j].into();
            }
        }
    }
    c
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn correctness_case<E>(m: usize, k: usize, n: usize, seed: u64) -> Result<(), String>
where
    E: Element + Into<i128>,
    E::Acc: Into<i128>,
{
    let (a, b) = seeded_operands::<E>(seed, m, k, n).map_err(|e| e.to_string())?;
    let want = oracle(&a, &b);
    for algo in [Algo::Standard, Algo::Strassen2] {
        let cfg = algo
            .config(TileShape::default())
            .map_err(|e| e.to_string())?
            .with_parallelism(threads());
        let (c, _) = gemm_with_report(&a, &b, &cfg).map_err(|e| e.to_string())?;
        ensure(c.rows() == m && c.cols() == n, || {
            format!("{algo} returned {}x{}", c.rows(), c.cols())
        })?;
        let got: Vec<i128> = c.as_slice().iter().map(|&v| v.into()).collect();
        if let Some(idx) = got.iter().zip(&want).position(|(g, w)| g != w) {
            return Err(format!(
                "{algo} {}x{}x{} {}: C[{},{}] = {} expected {}",
                m,
                k,
                n,
                E::TYPE,
                idx / n,
                idx % n,
                got[idx],
                want[idx]
            ));
        }
    }
    Ok(())
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let sizes = [(256, 256, 256), (512, 512, 512), (768, 512, 1024), (300, 300, 300)];
    for (i, &(m, k, n)) in sizes.iter().enumerate() {
        let seed = 100 + i as u64;
        correctness_case::<i8>(m, k, n, seed)?;
        correctness_case::<i16>(m, k, n, seed)?;
        correctness_case::<i32>(m, k, n, seed)?;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(60), || {
        format!("took {took:.1?}, budget 60 s")
    })?;
    Ok(format!(
        "4 shapes x 3 dtypes, strassen2 == standard == i128 oracle ({took:.1?})"
    ))
}

fn criterion_2() -> Check {
    let cases: [(&str, Schedule, usize); 4] = [
        ("base", schedule::base_schedule(), 7),
        ("standard(2)", schedule::standard_schedule(2), 8),
        ("standard(4)", schedule::standard_schedule(4), 64),
        ("strassen2", schedule::strassen2(), 49),
    ];
    for (name, s, len) in &cases {
        ensure(s.len() == *len, || format!("{name} has {} instructions", s.len()))?;
        let r = verify_schedule(s);
        ensure(r.passed(), || format!("{name} fails verification: {r}"))?;
    }

    // Every single sign flip in Strassen^2 must be caught.
    let s2 = schedule::strassen2();
    let mut mutants = 0;
    for i in 0..s2.len() {
        let ins = &s2.instructions()[i];
        let slots = ins.lhs.len() + ins.rhs.len() + ins.outputs.len();
        for slot in 0..slots {
            let mut list = s2.instructions().to_vec();
            let m = &mut list[i];
            let op = if slot < m.lhs.len() {
                &mut m.lhs[slot]
            } else if slot < m.lhs.len() + m.rhs.len() {
                &mut m.rhs[slot - m.lhs.len()]
            } else {
                &mut m.outputs[slot - m.lhs.len() - m.rhs.len()]
            };
            op.sign = op.sign.flip();
            let mutant = Schedule::new(4, list);
            ensure(!verify_schedule(&mutant).passed(), || {
                format!("sign flip in instruction {i} slot {slot} passes verification")
            })?;
            mutants += 1;
        }
    }

    for ins in s2.instructions() {
        for len in [ins.lhs.len(), ins.rhs.len()] {
            ensure([1, 2, 4].contains(&len), || format!("operand list of size {len}"))?;
        }
    }
    let m0 = &s2.instructions()[0];
    let targets: Vec<(usize, usize)> = m0.outputs.iter().map(|o| (o.row, o.col)).collect();
    ensure(targets.contains(&(0, 0)) && targets.contains(&(3, 3)), || {
        format!("m0 accumulates into {targets:?}")
    })?;
    Ok(format!(
        "7/8/64/49 verify, {mutants} single-sign mutants rejected, sizes in {{1,2,4}}, m0 -> C00 and C33"
    ))
}

fn criterion_3() -> Check {
    let std_cfg = EngineConfig::standard();
    let s2_cfg = EngineConfig::strassen2();
    let (a, b) = seeded_operands::<i8>(3, 256, 256, 256).map_err(|e| e.to_string())?;
    let (_, rs) = gemm_with_report(&a, &b, &std_cfg).map_err(|e| e.to_string())?;
    let (_, r2) = gemm_with_report(&a, &b, &s2_cfg).map_err(|e| e.to_string())?;
    ensure(rs.microkernel_calls() == 64 && r2.microkernel_calls() == 49, || {
        format!("256^3: {} vs {}", rs.microkernel_calls(), r2.microkernel_calls())
    })?;

    let mut checked = 0;
    for &(m, k, n) in &[(300, 300, 300), (512, 256, 768), (100, 900, 40)] {
        let (a, b) = seeded_operands::<i8>(4, m, k, n).map_err(|e| e.to_string())?;
        let (_, rs) = gemm_with_report(&a, &b, &std_cfg).map_err(|e| e.to_string())?;
        let (_, r2) = gemm_with_report(&a, &b, &s2_cfg).map_err(|e| e.to_string())?;
        let (cs, c2) = (rs.microkernel_calls(), r2.microkernel_calls());
        ensure(cs * 49 == c2 * 64, || format!("{m}x{k}x{n}: {c2}/{cs} is not 49/64"))?;
        checked += 1;
    }
    for d in (256..=4096).step_by(256) {
        for &(m, k, n) in &[(d, d, d), (d, 256, 2 * d), (d + 1, d, d - 1)] {
            let cs = count_microkernel_calls(m, k, n, &std_cfg);
            let c2 = count_microkernel_calls(m, k, n, &s2_cfg);
            ensure(cs * 49 == c2 * 64, || format!("{m}x{k}x{n}: {c2}/{cs} is not 49/64"))?;
            checked += 1;
        }
    }
    Ok(format!("256^3: 49 vs 64 calls; ratio exactly 49/64 at {checked} sizes"))
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for d in [2usize, 4, 8, 16] {
        for t in 0..50 {
            // tile dims are random multiples of d, up to 64
            let pick = |rng: &mut ChaCha8Rng| d * rng.gen_range(1..=64 / d);
            let (m, k, n) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
            let l = Tile::<i64>::from_fn(m, k, |_, _| rng.gen::<i16>() as i64);
            let r = Tile::<i64>::from_fn(k, n, |_, _| rng.gen::<i16>() as i64);
            let cfg = SystolicConfig::new(d, m, k, n).map_err(|e| e.to_string())?;
            let (got, stats) = run_tile(&cfg, &l.transpose(), &r).map_err(|e| e.to_string())?;
            let mut want = Tile::zeros(m, n);
            tile_gemm_accumulate(&mut want, &l, &r).map_err(|e| e.to_string())?;
            ensure(got == want, || {
                format!("D={d} tile {t} ({m}x{k}x{n}) differs from the micro-kernel")
            })?;
            let steady = stats.steady_cycles();
            ensure(
                stats.macs == (m * k * n) as u64 && stats.macs == steady * (d * d) as u64,
                || format!("D={d} tile {t}: {} MACs over {steady} steady cycles", stats.macs),
            )?;
        }
    }
    let cfg = SystolicConfig::new(16, 64, 64, 64).map_err(|e| e.to_string())?;
    let l = Tile::<i64>::from_fn(64, 64, |i, j| (i * 3 + j) as i64 % 17 - 8);
    let r = Tile::<i64>::from_fn(64, 64, |i, j| (i + 5 * j) as i64 % 13 - 6);
    let (_, stats) = run_tile(&cfg, &l.transpose(), &r).map_err(|e| e.to_string())?;
    ensure(stats.cycles <= 1088, || {
        format!("64^3 on 16x16 took {} cycles", stats.cycles)
    })?;
    ensure(stats.peak_macs_per_cycle == 256 && stats.full_cycles > 0, || {
        format!("64^3 on 16x16 peaks at {} MACs/cycle", stats.peak_macs_per_cycle)
    })?;
    let took = start.elapsed();
    ensure(took < Duration::from_secs(120), || {
        format!("took {took:.1?}, budget 120 s")
    })?;
    Ok(format!(
        "D in {{2,4,8,16}} x 50 tiles exact; steady throughput D^2 MACs/cycle; 64^3 on 16x16 in {} cycles ({took:.1?})",
        stats.cycles
    ))
}

fn criterion_5() -> Check {
    let tile = TileShape::default();
    let std4 = schedule::standard_schedule(4);
    let s2 = schedule::strassen2();
    let cb = PlatformModel::compute_bound();
    let r = predict(4096, 4096, 4096, &std4, tile, &cb, ElemType::I16).map_err(|e| e.to_string())?;
    let rel = |x: f64, y: f64| (x - y).abs() / y;
    ensure(rel(r.gops, 140.8) <= 0.01, || {
        format!("standard int16 predicts {:.2} GOPS vs 140.8", r.gops)
    })?;
    ensure(rel(r.gops, 140.6) <= 0.01, || {
        format!("standard int16 predicts {:.2} GOPS vs 140.6", r.gops)
    })?;

    let n = 8192;
    let rs = predict(n, n, n, &std4, tile, &cb, ElemType::I16).map_err(|e| e.to_string())?;
    let r2 = predict(n, n, n, &s2, tile, &cb, ElemType::I16).map_err(|e| e.to_string())?;
    let ratio = rs.runtime_s / r2.runtime_s;
    ensure(rel(ratio, 64.0 / 49.0) <= 0.02, || {
        format!("speedup {ratio:.4} vs 64/49")
    })?;

    for s in [&std4, &s2] {
        let h = predict(n, n, n, s, tile, &PlatformModel::hbm(), ElemType::I16).map_err(|e| e.to_string())?;
        let d = predict(n, n, n, s, tile, &PlatformModel::ddr(), ElemType::I16).map_err(|e| e.to_string())?;
        ensure(h.bank_penalty_active() && !d.bank_penalty_active(), || {
            format!(
                "penalty flags: hbm {} ddr {}",
                h.bank_penalty_active(),
                d.bank_penalty_active()
            )
        })?;
        ensure(h.total_cycles > d.total_cycles, || {
            format!("hbm {} cycles vs ddr {} at n = {n}", h.total_cycles, d.total_cycles)
        })?;
        // HBM leads DDR below bank capacity and falls behind past it
        let h4 = predict(4096, 4096, 4096, s, tile, &PlatformModel::hbm(), ElemType::I16).map_err(|e| e.to_string())?;
        let d4 = predict(4096, 4096, 4096, s, tile, &PlatformModel::ddr(), ElemType::I16).map_err(|e| e.to_string())?;
        ensure(!h4.bank_penalty_active() && h4.gops >= d4.gops, || {
            format!("at 4096: hbm {:.1} GOPS vs ddr {:.1}", h4.gops, d4.gops)
        })?;
    }
    Ok(format!(
        "int16 standard {:.2} GOPS; strassen2 speedup {ratio:.4} at 8192; HBM bank penalty at 8192, DDR none",
        r.gops
    ))
}

fn criterion_6() -> Check {
    let mut products = 0;
    let mut peak = 0;
    for algo in Algo::ALL {
        for depth in [1usize, 2, 4] {
            let cfg = algo
                .config(TileShape::new(16, 8, 32).unwrap())
                .and_then(|c| c.with_stream_depth(depth))
                .map_err(|e| e.to_string())?;
            let (a, b) = seeded_operands::<i16>(6, 130, 70, 200).map_err(|e| e.to_string())?;
            let (_, report) = gemm_with_report(&a, &b, &cfg).map_err(|e| e.to_string())?;
            for rec in &report.blocks {
                let total: u32 = rec.tile_loads.iter().sum();
                ensure(total == 32 && rec.tile_loads.iter().all(|&c| c == 1), || {
                    format!(
                        "{algo} block ({},{},{}) loads {:?}",
                        rec.block_row, rec.block_col, rec.block_inner, rec.tile_loads
                    )
                })?;
                ensure(rec.stats.stream_high_water <= depth, || {
                    format!("{algo} high water {} > depth {depth}", rec.stats.stream_high_water)
                })?;
                peak = peak.max(rec.stats.stream_high_water);
                products += 1;
            }
        }
    }
    Ok(format!(
        "{products} block products: 32 tile loads each; stream high water {peak} <= depth"
    ))
}

fn criterion_7() -> Check {
    let (a, b) = seeded_operands::<i32>(77, 300, 520, 270).map_err(|e| e.to_string())?;
    for algo in [Algo::Standard, Algo::Strassen2] {
        let base = algo.config(TileShape::default()).map_err(|e| e.to_string())?;
        let mut outputs = Vec::new();
        for t in [1usize, 4, 8] {
            let cfg = base.clone().with_parallelism(t);
            outputs.push(gemm_with_report(&a, &b, &cfg).map_err(|e| e.to_string())?);
        }
        ensure(outputs.windows(2).all(|w| w[0] == w[1]), || {
            format!("{algo} output depends on thread count")
        })?;
    }

    let cases: Vec<BenchCase> = [Algo::Standard, Algo::Strassen2]
        .into_iter()
        .flat_map(|algo| {
            ElemType::ALL.into_iter().map(move |elem| BenchCase {
                algo,
                elem,
                m: 256,
                k: 256,
                n: 256,
            })
        })
        .collect();
    let non_timing = |csv: &str| -> Vec<String> {
        csv.lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() == 8 {
                    [&f[..5], &f[7..]].concat().join(",")
                } else {
                    l.to_string()
                }
            })
            .collect()
    };
    let mut runs = Vec::new();
    for t in [1usize, 4] {
        let opts = BenchOptions {
            seed: 2024,
            repetitions: 1,
            threads: t,
            tile: TileShape::default(),
        };
        let rows = run_bench(&cases, &opts).map_err(|e| e.to_string())?;
        runs.push(non_timing(&bench_csv(&rows, opts.seed)));
    }
    ensure(runs[0] == runs[1], || {
        "bench CSV non-timing columns differ between runs".into()
    })?;

    let configs: Vec<SweepConfig> = [
        ("standard", schedule::standard_schedule(4)),
        ("strassen2", schedule::strassen2()),
    ]
    .into_iter()
    .map(|(name, s)| SweepConfig {
        algo: name.into(),
        schedule: s,
        platform: PlatformModel::hbm(),
        elem: ElemType::I16,
        tile: TileShape::default(),
    })
    .collect();
    let sizes: Vec<_> = [256, 1024, 4096, 8192].iter().map(|&n| (n, n, n)).collect();
    let m1 = model_csv(&sweep(&sizes, &configs).map_err(|e| e.to_string())?);
    let m2 = model_csv(&sweep(&sizes, &configs).map_err(|e| e.to_string())?);
    ensure(m1 == m2, || "model CSV differs between runs".into())?;
    Ok("gemm identical for 1/4/8 threads; bench and model CSV non-timing columns stable".into())
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("correctness", criterion_1),
        ("schedule identity", criterion_2),
        ("micro-kernel call counts", criterion_3),
        ("systolic equivalence", criterion_4),
        ("perf model ceilings", criterion_5),
        ("memory discipline", criterion_6),
        ("determinism", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
