//! End-to-end tests of the `stackaot` binary: infuse -> compile -> run
//! with a workload and trace, plus the bench subcommand.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stackaot"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stackaot-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

const PROGRAM: &str = "
.statics ints=1 refs=1
.method main params=() ret=s locals_int=2
  getstatic_a 0
  arraylength
  sstore 1
  sconst 0
  sstore 0
loop:
  getstatic_a 0
  sload 0
  saload16
  getstatic_s 0
  sadd
  putstatic_s 0
  sinc 0 1
  sload 0
  sload 1
  if_scmplt loop
  getstatic_s 0
  sreturn
.end
.entry main
";

#[test]
fn pipeline_round_trip() {
    let src = tmp("sum.sasm");
    let sinf = tmp("sum.sinf");
    let img = tmp("sum.img");
    let wl = tmp("sum.workload.json");
    let trace = tmp("sum.trace.csv");
    let summary = tmp("sum.summary.json");
    fs::write(&src, PROGRAM).unwrap();
    fs::write(
        &wl,
        r#"{ "statics_int": [100], "arrays": [ { "kind": "short", "data": [1, 2, 3, 4] } ] }"#,
    )
    .unwrap();

    let st = bin().args(["infuse"]).arg(&src).arg("-o").arg(&sinf).status().unwrap();
    assert!(st.success());
    let text = fs::read_to_string(&sinf).unwrap();
    assert!(text.contains("markloop_begin"), "{text}");

    let st = bin()
        .args(["compile"])
        .arg(&sinf)
        .arg("-o")
        .arg(&img)
        .args(["--level", "markloop", "--pin-cap", "4"])
        .status()
        .unwrap();
    assert!(st.success());

    let out = bin()
        .args(["run"])
        .arg(&img)
        .arg("--workload")
        .arg(&wl)
        .arg("--trace")
        .arg(&trace)
        .arg("-o")
        .arg(&summary)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(summary["return_value"], 110);
    let total = summary["total_cycles"].as_u64().unwrap();
    assert!(total > 0);
    let cats = &summary["category_cycles"];
    let cat_sum: u64 = ["push_pop", "load_store", "mov", "other"]
        .iter()
        .map(|k| cats[*k].as_u64().unwrap())
        .sum();
    assert_eq!(cat_sum + summary["builtin_cycles"].as_u64().unwrap(), total);

    let csv = fs::read_to_string(&trace).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "pc,opcode,category,cycles,taken");
    assert_eq!(
        lines.count() as u64,
        summary["instr_count"].as_u64().unwrap()
    );
}

#[test]
fn infuse_options_disable_passes() {
    // Wide-index load: the narrow-index pass would fold `s2i; saload`
    // into `saload16`.
    let wide = "
.statics ints=0 refs=1
.method main params=() ret=s locals_int=3
loop:
  getstatic_a 0
  sload 0
  s2i
  saload
  sstore 1
  sinc 0 1
  sload 0
  sconst 4
  if_scmplt loop
  sload 0
  sreturn
.end
.entry main
";
    let src = tmp("plain.sasm");
    fs::write(&src, wide).unwrap();

    let folded = tmp("folded.sinf");
    let st = bin().args(["infuse"]).arg(&src).arg("-o").arg(&folded).status().unwrap();
    assert!(st.success());
    let text = fs::read_to_string(&folded).unwrap();
    assert!(text.contains("saload16"), "{text}");
    assert!(text.contains("markloop_begin"), "{text}");

    let plain = tmp("plain.sinf");
    let st = bin()
        .args(["infuse"])
        .arg(&src)
        .arg("-o")
        .arg(&plain)
        .args(["--no-markloop", "--no-narrow-idx"])
        .status()
        .unwrap();
    assert!(st.success());
    let text = fs::read_to_string(&plain).unwrap();
    assert!(!text.contains("markloop_begin"), "{text}");
    assert!(!text.contains("saload16"), "{text}");
    assert!(text.contains("saload"), "{text}");
}

#[test]
fn bench_subcommand_reports_csv() {
    let out = bin()
        .args(["bench", "--bench", "bsearch", "--inputs", "2", "--report", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("bench,level,cycles"));
    assert_eq!(lines.filter(|l| l.starts_with("bsearch,")).count(), 5);
    assert!(text.lines().skip(1).all(|l| l.is_empty() || l.ends_with(",true")));
}

#[test]
fn unknown_level_is_rejected() {
    let src = tmp("err.sinf");
    fs::write(&src, ".method main params=() ret=void\n  return\n.end\n.entry main\n").unwrap();
    let out = bin()
        .args(["compile"])
        .arg(&src)
        .arg("-o")
        .arg(tmp("err.img"))
        .args(["--level", "turbo"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown level"));
}
