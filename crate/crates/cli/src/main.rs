use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stackaot::bench;
use stackaot::workload::WorkloadFile;
use stackaot_core::bytecode::asm::{parse_assembly, print_infusion};
use stackaot_core::bytecode::verify::verify;
use stackaot_core::compile::{compile_infusion, OptLevel};
use stackaot_core::image::CodeImage;
use stackaot_core::infuse::{infuse, InfuseOptions};
use stackaot_core::sim::{run, SimOptions};

#[derive(Parser)]
#[command(name = "stackaot", version, about = "Stack-bytecode to register-ISA translator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Transform assembly into an optimized infusion (.sinf).
    Infuse {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Disable folding of constant shift counts.
        #[arg(long)]
        no_constshift: bool,
        /// Disable SIMUL fusion of widening multiplies.
        #[arg(long)]
        no_simul: bool,
        /// Disable narrow (16-bit) array index forms.
        #[arg(long)]
        no_narrow_idx: bool,
        /// Disable loop marking.
        #[arg(long)]
        no_markloop: bool,
        /// Disable conversion to lightweight calls.
        #[arg(long)]
        no_lightweight: bool,
    },
    /// Compile an infusion to a native code image (.img).
    Compile {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// baseline | peephole | cache | popped | markloop
        #[arg(long, default_value = "markloop")]
        level: String,
        /// Maximum register pairs pinned per marked loop (1..=7).
        #[arg(long, default_value_t = 7)]
        pin_cap: usize,
    },
    /// Execute a code image on the cycle-accurate simulator.
    Run {
        image: PathBuf,
        /// JSON file initializing statics and arrays.
        #[arg(long)]
        workload: Option<PathBuf>,
        /// Write a per-instruction trace CSV to this path.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 4096)]
        ram_size: u16,
        #[arg(long, default_value_t = 50_000_000)]
        cycle_limit: u64,
        /// Write the summary JSON here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the benchmark suite against the interpreter oracle.
    Bench {
        /// Restrict to one benchmark by name.
        #[arg(long = "bench")]
        bench: Option<String>,
        /// Comma-separated levels (default: all five).
        #[arg(long, value_delimiter = ',')]
        levels: Vec<String>,
        /// Also sweep the mark-loop pin cap from 1 to 7.
        #[arg(long)]
        pin_cap_sweep: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Seeded inputs checked per benchmark and level.
        #[arg(long, default_value_t = 5)]
        inputs: usize,
        /// md | csv | json
        #[arg(long, default_value = "md")]
        report: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn read_to_string(p: &PathBuf) -> Result<String, String> {
    fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn write_out(p: &PathBuf, data: &[u8]) -> Result<(), String> {
    fs::write(p, data).map_err(|e| format!("{}: {e}", p.display()))
}

fn dispatch(cmd: Cmd) -> Result<ExitCode, String> {
    match cmd {
        Cmd::Infuse {
            input,
            output,
            no_constshift,
            no_simul,
            no_narrow_idx,
            no_markloop,
            no_lightweight,
        } => {
            let src = read_to_string(&input)?;
            let mut inf = parse_assembly(&src).map_err(|e| format!("parse: {e}"))?;
            verify(&mut inf).map_err(|e| format!("verify: {e}"))?;
            let opts = InfuseOptions {
                const_shift: !no_constshift,
                simul: !no_simul,
                narrow_index: !no_narrow_idx,
                mark_loops: !no_markloop,
                lightweight: !no_lightweight,
            };
            let report = infuse(&mut inf, &opts).map_err(|e| format!("infuse: {e}"))?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_out(&output, print_infusion(&inf).as_bytes())?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Compile { input, output, level, pin_cap } => {
            let level = OptLevel::from_name(&level).ok_or_else(|| {
                format!("unknown level `{level}` (baseline|peephole|cache|popped|markloop)")
            })?;
            if !(1..=7).contains(&pin_cap) {
                return Err(format!("pin cap {pin_cap} out of range 1..=7"));
            }
            let src = read_to_string(&input)?;
            let mut inf = parse_assembly(&src).map_err(|e| format!("parse: {e}"))?;
            verify(&mut inf).map_err(|e| format!("verify: {e}"))?;
            let result =
                compile_infusion(&inf, level, pin_cap).map_err(|e| format!("compile: {e:?}"))?;
            write_out(&output, &result.image.to_bytes())?;
            eprintln!(
                "{}: {} words at level {}",
                output.display(),
                result.image.words.len(),
                level.name()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run { image, workload, trace, ram_size, cycle_limit, output } => {
            let bytes = fs::read(&image).map_err(|e| format!("{}: {e}", image.display()))?;
            let img = CodeImage::from_bytes(&bytes).map_err(|e| format!("image: {e}"))?;
            let w = match workload {
                Some(p) => {
                    let text = read_to_string(&p)?;
                    let file: WorkloadFile =
                        serde_json::from_str(&text).map_err(|e| format!("workload: {e}"))?;
                    file.into_workload()?
                }
                None => Default::default(),
            };
            let opts = SimOptions { ram_size, cycle_limit, trace: trace.is_some() };
            let out = run(&img, &w, &opts).map_err(|e| format!("run: {e}"))?;
            if let Some(p) = trace {
                let mut csv = String::from("pc,opcode,category,cycles,taken\n");
                for t in &out.stats.trace {
                    csv.push_str(&format!(
                        "{},{:?},{},{},{}\n",
                        t.pc,
                        t.instr,
                        t.category.name(),
                        t.cycles,
                        t.taken
                    ));
                }
                write_out(&p, csv.as_bytes())?;
            }
            let summary = serde_json::json!({
                "total_cycles": out.stats.total_cycles,
                "code_cycles": out.stats.code_cycles,
                "builtin_cycles": out.stats.builtin_cycles,
                "instr_count": out.stats.instr_count,
                "category_cycles": {
                    "push_pop": out.stats.category_cycles[0],
                    "load_store": out.stats.category_cycles[1],
                    "mov": out.stats.category_cycles[2],
                    "other": out.stats.category_cycles[3],
                },
                "return_value": out.state.ret,
            });
            let text = serde_json::to_string_pretty(&summary).unwrap();
            match output {
                Some(p) => write_out(&p, text.as_bytes())?,
                None => println!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bench { bench, levels, pin_cap_sweep, seed, inputs, report, output } => {
            let mut cfg = bench::SuiteConfig {
                benches: bench.map(|b| vec![b]),
                seed,
                inputs,
                pin_sweep: pin_cap_sweep,
                ..Default::default()
            };
            if !levels.is_empty() {
                cfg.levels = levels
                    .iter()
                    .map(|l| {
                        OptLevel::from_name(l).ok_or_else(|| format!("unknown level `{l}`"))
                    })
                    .collect::<Result<_, _>>()?;
            }
            let suite = bench::run_suite(&cfg)?;
            let text = bench::render(&suite, &report)?;
            match output {
                Some(p) => write_out(&p, text.as_bytes())?,
                None => print!("{text}"),
            }
            if suite.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for f in &suite.failures {
                    eprintln!("equivalence failure: {f}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
    }
}
