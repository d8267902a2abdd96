//! Benchmark suite: seven programs, seeded input generators, host-side
//! output checkers, and the suite runner that measures every program at
//! every optimization level against the interpreter oracle.

pub mod native;
pub mod reference;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use stackaot_core::bytecode::asm::parse_assembly;
use stackaot_core::bytecode::verify::verify;
use stackaot_core::bytecode::{ElemKind, Infusion};
use stackaot_core::compile::{compile_infusion, OptLevel};
use stackaot_core::image::CodeImage;
use stackaot_core::infuse::{infuse, InfuseOptions};
use stackaot_core::interp::interpret;
use stackaot_core::sim::{run, SimOptions};
use stackaot_core::world::{FinalState, Workload};

const INTERP_STEP_LIMIT: u64 = 50_000_000;

pub struct Benchmark {
    pub name: &'static str,
    pub source: &'static str,
    pub gen: fn(u64) -> Workload,
    pub check: fn(&Workload, &FinalState) -> Result<(), String>,
    pub native: Option<fn() -> CodeImage>,
}

fn shorts(rng: &mut ChaCha8Rng, n: usize) -> Vec<i32> {
    (0..n).map(|_| rng.random::<i16>() as i32).collect()
}
fn ints(rng: &mut ChaCha8Rng, n: usize) -> Vec<i32> {
    (0..n).map(|_| rng.random::<i32>()).collect()
}

fn expect_array(
    state: &FinalState,
    idx: usize,
    want: &[i32],
    what: &str,
) -> Result<(), String> {
    let got = &state.arrays[idx].1;
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: mismatch (got {:?}..., want {:?}...)",
            &got[..got.len().min(8)], &want[..want.len().min(8)]))
    }
}

// ---- generators and checkers ----------------------------------------------

fn gen_sort(seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Workload {
        statics_int: vec![],
        arrays: vec![(ElemKind::Short, shorts(&mut rng, 256))],
    }
}

fn check_sorted(w: &Workload, state: &FinalState) -> Result<(), String> {
    expect_array(state, 0, &reference::sorted(&w.arrays[0].1), "sorted array")
}

fn gen_bsearch(seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a: Vec<i16> = (0..256).map(|_| rng.random::<i16>()).collect();
    a.sort_unstable();
    let a: Vec<i32> = a.into_iter().map(|x| x as i32).collect();
    // Half the keys are present, half random.
    let keys: Vec<i32> = (0..64)
        .map(|i| {
            if i % 2 == 0 {
                a[rng.random_range(0..256)]
            } else {
                rng.random::<i16>() as i32
            }
        })
        .collect();
    Workload {
        statics_int: vec![],
        arrays: vec![
            (ElemKind::Short, a),
            (ElemKind::Short, keys),
            (ElemKind::Short, vec![0; 64]),
        ],
    }
}

fn check_bsearch(w: &Workload, state: &FinalState) -> Result<(), String> {
    let want = reference::bsearch(&w.arrays[0].1, &w.arrays[1].1);
    expect_array(state, 2, &want, "search results")
}

fn fft_tables() -> (Vec<i32>, Vec<i32>, Vec<i32>) {
    let mut cos = Vec::with_capacity(32);
    let mut sin = Vec::with_capacity(32);
    for k in 0..32 {
        let th = core::f64::consts::PI * k as f64 / 32.0;
        cos.push((th.cos() * 32767.0).round() as i32);
        sin.push((th.sin() * 32767.0).round() as i32);
    }
    let brev: Vec<i32> = (0..64u32)
        .map(|i| (i.reverse_bits() >> 26) as i32)
        .collect();
    (cos, sin, brev)
}

fn gen_fft(seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cos, sin, brev) = fft_tables();
    Workload {
        statics_int: vec![],
        arrays: vec![
            (ElemKind::Short, shorts(&mut rng, 64)),
            (ElemKind::Short, shorts(&mut rng, 64)),
            (ElemKind::Short, cos),
            (ElemKind::Short, sin),
            (ElemKind::Short, brev),
        ],
    }
}

fn check_fft(w: &Workload, state: &FinalState) -> Result<(), String> {
    let (re, im) = reference::fft64(
        &w.arrays[0].1,
        &w.arrays[1].1,
        &w.arrays[2].1,
        &w.arrays[3].1,
        &w.arrays[4].1,
    );
    expect_array(state, 0, &re, "fft real part")?;
    expect_array(state, 1, &im, "fft imaginary part")
}

fn gen_xxtea(seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Workload {
        statics_int: vec![],
        arrays: vec![
            (ElemKind::Int, ints(&mut rng, 8)),
            (ElemKind::Int, ints(&mut rng, 4)),
        ],
    }
}

fn check_xxtea(w: &Workload, state: &FinalState) -> Result<(), String> {
    let want = reference::xxtea(&w.arrays[0].1, &w.arrays[1].1);
    expect_array(state, 0, &want, "xxtea ciphertext")
}

fn md5_tables() -> (Vec<i32>, Vec<i32>) {
    let k: Vec<i32> = (0..64)
        .map(|i| (((i as f64 + 1.0).sin().abs() * 4294967296.0) as u32) as i32)
        .collect();
    let rounds: [[i32; 4]; 4] = [[7, 12, 17, 22], [5, 9, 14, 20], [4, 11, 16, 23], [6, 10, 15, 21]];
    let s: Vec<i32> = (0..64).map(|i| rounds[i / 16][i % 4]).collect();
    (k, s)
}

fn gen_md5(seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, s) = md5_tables();
    Workload {
        statics_int: vec![0; 8],
        arrays: vec![
            (ElemKind::Int, ints(&mut rng, 16)),
            (ElemKind::Int, k),
            (ElemKind::Short, s),
            (ElemKind::Int, vec![0; 4]),
        ],
    }
}

fn check_md5(w: &Workload, state: &FinalState) -> Result<(), String> {
    let want = reference::md5(&w.arrays[0].1, &w.arrays[1].1, &w.arrays[2].1);
    expect_array(state, 3, &want, "md5 digest")
}

fn gen_rc5(seed: u64) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Workload {
        statics_int: vec![],
        arrays: vec![
            (ElemKind::Int, ints(&mut rng, 26)),
            (ElemKind::Int, ints(&mut rng, 16)),
        ],
    }
}

fn check_rc5(w: &Workload, state: &FinalState) -> Result<(), String> {
    let want = reference::rc5(&w.arrays[0].1, &w.arrays[1].1);
    expect_array(state, 1, &want, "rc5 ciphertext")
}

pub fn all() -> Vec<Benchmark> {
    vec![
        Benchmark {
            name: "bsort",
            source: include_str!("programs/bsort.sasm"),
            gen: gen_sort,
            check: check_sorted,
            native: Some(native::bsort),
        },
        Benchmark {
            name: "hsort",
            source: include_str!("programs/hsort.sasm"),
            gen: gen_sort,
            check: check_sorted,
            native: None,
        },
        Benchmark {
            name: "bsearch",
            source: include_str!("programs/bsearch.sasm"),
            gen: gen_bsearch,
            check: check_bsearch,
            native: Some(native::bsearch),
        },
        Benchmark {
            name: "fft64",
            source: include_str!("programs/fft64.sasm"),
            gen: gen_fft,
            check: check_fft,
            native: None,
        },
        Benchmark {
            name: "xxtea",
            source: include_str!("programs/xxtea.sasm"),
            gen: gen_xxtea,
            check: check_xxtea,
            native: None,
        },
        Benchmark {
            name: "md5",
            source: include_str!("programs/md5.sasm"),
            gen: gen_md5,
            check: check_md5,
            native: None,
        },
        Benchmark {
            name: "rc5",
            source: include_str!("programs/rc5.sasm"),
            gen: gen_rc5,
            check: check_rc5,
            native: None,
        },
    ]
}

/// Parse, verify, and infuse a benchmark source with default options.
pub fn prepare(source: &str) -> Result<Infusion, String> {
    let mut inf = parse_assembly(source).map_err(|e| format!("parse: {e}"))?;
    verify(&mut inf).map_err(|e| format!("verify: {e}"))?;
    infuse(&mut inf, &InfuseOptions::default()).map_err(|e| format!("infuse: {e}"))?;
    Ok(inf)
}

// ---- suite ----------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub bench: String,
    pub level: String,
    pub cycles: u64,
    pub code_bytes: usize,
    /// push/pop, load/store, mov, other.
    pub category_cycles: [u64; 4],
    pub builtin_cycles: u64,
    pub equivalent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NativeRow {
    pub bench: String,
    pub native_cycles: u64,
    /// (level name, overhead vs native in percent).
    pub overhead_pct: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub bench: String,
    pub pin_cap: usize,
    pub cycles: u64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct SuiteReport {
    pub rows: Vec<LevelRow>,
    pub native: Vec<NativeRow>,
    pub sweep: Vec<SweepRow>,
    pub failures: Vec<String>,
}

pub struct SuiteConfig {
    pub benches: Option<Vec<String>>,
    pub levels: Vec<OptLevel>,
    pub seed: u64,
    pub inputs: usize,
    pub pin_cap: usize,
    pub pin_sweep: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            benches: None,
            levels: OptLevel::ALL.to_vec(),
            seed: 1,
            inputs: 5,
            pin_cap: 7,
            pin_sweep: false,
        }
    }
}

fn sim_opts() -> SimOptions {
    SimOptions { cycle_limit: 200_000_000, ..SimOptions::default() }
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport, String> {
    let mut report = SuiteReport::default();
    for b in all() {
        if let Some(sel) = &cfg.benches {
            if !sel.iter().any(|n| n == b.name) {
                continue;
            }
        }
        run_one(&b, cfg, &mut report)?;
    }
    if let Some(sel) = &cfg.benches {
        for name in sel {
            if !all().iter().any(|b| b.name == name) {
                return Err(format!("unknown benchmark `{name}`"));
            }
        }
    }
    Ok(report)
}

fn run_one(b: &Benchmark, cfg: &SuiteConfig, report: &mut SuiteReport) -> Result<(), String> {
    let inf = prepare(b.source).map_err(|e| format!("{}: {e}", b.name))?;
    let images: Vec<(OptLevel, CodeImage)> = cfg
        .levels
        .iter()
        .map(|l| {
            compile_infusion(&inf, *l, cfg.pin_cap)
                .map(|r| (*l, r.image))
                .map_err(|e| format!("{}: compile at {}: {e:?}", b.name, l.name()))
        })
        .collect::<Result<_, _>>()?;

    // Measurement input: first seed. Further seeds only check equivalence.
    let mut rows: Vec<LevelRow> = Vec::new();
    for t in 0..cfg.inputs.max(1) {
        let w = (b.gen)(cfg.seed.wrapping_add(t as u64));
        let want = interpret(&inf, &w, INTERP_STEP_LIMIT)
            .map_err(|e| format!("{}: interpreter: {e:?}", b.name))?;
        if let Err(e) = (b.check)(&w, &want) {
            return Err(format!("{}: reference checker vs interpreter: {e}", b.name));
        }
        for (level, image) in &images {
            let out = run(image, &w, &sim_opts())
                .map_err(|e| format!("{}: sim at {}: {e}", b.name, level.name()))?;
            let equivalent = out.state == want;
            if !equivalent {
                report.failures.push(format!(
                    "{} level {} seed {}: simulator diverges from interpreter",
                    b.name,
                    level.name(),
                    cfg.seed.wrapping_add(t as u64)
                ));
            }
            if t == 0 {
                rows.push(LevelRow {
                    bench: b.name.into(),
                    level: level.name().into(),
                    cycles: out.stats.total_cycles,
                    code_bytes: image.words.len() * 2,
                    category_cycles: out.stats.category_cycles,
                    builtin_cycles: out.stats.builtin_cycles,
                    equivalent,
                });
            } else if !equivalent {
                if let Some(r) = rows.iter_mut().find(|r| r.level == level.name()) {
                    r.equivalent = false;
                }
            }
        }
        // The native baseline must agree with the interpreter too.
        if t == 0 {
            if let Some(mk) = b.native {
                let img = mk();
                let out = run(&img, &w, &sim_opts())
                    .map_err(|e| format!("{}: native sim: {e}", b.name))?;
                if out.state != want {
                    return Err(format!("{}: native baseline diverges from oracle", b.name));
                }
                let native_cycles = out.stats.total_cycles;
                let overhead_pct = rows
                    .iter()
                    .map(|r| {
                        let oh = 100.0 * (r.cycles as f64 - native_cycles as f64)
                            / native_cycles as f64;
                        (r.level.clone(), oh)
                    })
                    .collect();
                report.native.push(NativeRow {
                    bench: b.name.into(),
                    native_cycles,
                    overhead_pct,
                });
            }
        }
    }
    report.rows.append(&mut rows);

    if cfg.pin_sweep {
        let w = (b.gen)(cfg.seed);
        for cap in 1..=7usize {
            let r = compile_infusion(&inf, OptLevel::MarkLoops, cap)
                .map_err(|e| format!("{}: compile cap {cap}: {e:?}", b.name))?;
            let out = run(&r.image, &w, &sim_opts())
                .map_err(|e| format!("{}: sim cap {cap}: {e}", b.name))?;
            report.sweep.push(SweepRow {
                bench: b.name.into(),
                pin_cap: cap,
                cycles: out.stats.total_cycles,
            });
        }
    }
    Ok(())
}

// ---- rendering ------------------------------------------------------------

const CATS: [&str; 4] = ["push/pop", "load/store", "mov", "other"];

pub fn render(report: &SuiteReport, format: &str) -> Result<String, String> {
    match format {
        "json" => serde_json::to_string_pretty(report).map_err(|e| e.to_string()),
        "csv" => Ok(render_csv(report)),
        "md" => Ok(render_md(report)),
        other => Err(format!("unknown report format `{other}` (md|csv|json)")),
    }
}

fn render_csv(r: &SuiteReport) -> String {
    let mut out = String::from(
        "bench,level,cycles,code_bytes,push_pop,load_store,mov,other,builtin,equivalent\n",
    );
    for row in &r.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.bench,
            row.level,
            row.cycles,
            row.code_bytes,
            row.category_cycles[0],
            row.category_cycles[1],
            row.category_cycles[2],
            row.category_cycles[3],
            row.builtin_cycles,
            row.equivalent
        ));
    }
    out
}

fn render_md(r: &SuiteReport) -> String {
    let mut out = String::new();
    out.push_str("## Cycles per benchmark and optimization level\n\n");
    out.push_str(&format!(
        "| bench | level | cycles | code bytes | {} | builtin | ok |\n",
        CATS.join(" | ")
    ));
    out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    for row in &r.rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            row.bench,
            row.level,
            row.cycles,
            row.code_bytes,
            row.category_cycles[0],
            row.category_cycles[1],
            row.category_cycles[2],
            row.category_cycles[3],
            row.builtin_cycles,
            if row.equivalent { "yes" } else { "NO" }
        ));
    }
    if !r.native.is_empty() {
        out.push_str("\n## Overhead vs hand-written native code\n\n");
        out.push_str("| bench | native cycles | level | overhead % |\n|---|---|---|---|\n");
        for n in &r.native {
            for (level, pct) in &n.overhead_pct {
                out.push_str(&format!(
                    "| {} | {} | {} | {:+.1} |\n",
                    n.bench, n.native_cycles, level, pct
                ));
            }
        }
    }
    if !r.sweep.is_empty() {
        out.push_str("\n## Mark-loop pin-cap sweep (MARK_LOOPS level)\n\n");
        out.push_str("| bench | pin cap | cycles |\n|---|---|---|\n");
        for s in &r.sweep {
            out.push_str(&format!("| {} | {} | {} |\n", s.bench, s.pin_cap, s.cycles));
        }
    }
    if !r.failures.is_empty() {
        out.push_str("\n## FAILURES\n\n");
        for f in &r.failures {
            out.push_str(&format!("- {f}\n"));
        }
    }
    out
}
