use std::fs;
use std::path::Path;

use replaycache::cli::run_cli;

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("replaycache").chain(args.iter().copied()))
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn compile_then_run_with_metadata() {
    let d = tempfile::tempdir().unwrap();
    let (asm, meta, rep) = (p(d.path(), "h.s"), p(d.path(), "h.meta"), p(d.path(), "h.csv"));
    assert_eq!(cli(&["compile", "@histogram", "-o", &asm, "--emit-metadata", &meta]), 0);
    assert!(fs::read_to_string(&meta).unwrap().starts_with("RPCMETA v1"));
    assert_eq!(cli(&["run", &asm, "--metadata", &meta, "--outage-at", "40,90", "--report", &rep]), 0);
    let csv = fs::read_to_string(&rep).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(cli(&["verify", &asm, "--metadata", &meta]), 0);
}

#[test]
fn fuzz_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let rep = p(d.path(), "f.json");
    assert_eq!(cli(&["fuzz", "@two_stores", "--report", &rep]), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&rep).unwrap()).unwrap();
    assert!(v.is_object());
    assert_eq!(cli(&["fuzz", "@two_stores", "--design", "wbunsafe"]), 1);
}

#[test]
fn usage_and_input_errors_exit_2() {
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&["run"]), 2);
    assert_eq!(cli(&["run", "@no_such_program"]), 2);
    assert_eq!(cli(&["run", "/nonexistent/x.s"]), 2);
    let d = tempfile::tempdir().unwrap();
    let bad = p(d.path(), "bad.s");
    fs::write(&bad, "fn main {\ne:\n frob v1\n}").unwrap();
    assert_eq!(cli(&["compile", &bad]), 2);
    let cfg = p(d.path(), "c.toml");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(cli(&["--config", &cfg, "stats", "@fib"]), 2);
}

#[test]
fn stats_ilp_bench() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["stats", "@matvec", "--json"]), 0);
    assert_eq!(cli(&["ilp", "@locality_loop", "--nvm", "pcm"]), 0);
    let out = p(d.path(), "b.csv");
    assert_eq!(cli(&["bench", "@fib", "--designs", "replaycache,nocache", "--nvm", "reram", "-o", &out]), 0);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("version,program,design"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn config_file_applies() {
    let d = tempfile::tempdir().unwrap();
    let cfg = p(d.path(), "c.toml");
    fs::write(&cfg, "seed = 4\n[timings.reram]\nt_wr = 200.0\n").unwrap();
    let (a, b) = (p(d.path(), "a.json"), p(d.path(), "b.json"));
    assert_eq!(cli(&["run", "@two_stores", "--nvm", "reram", "--report", &a]), 0);
    assert_eq!(cli(&["--config", &cfg, "run", "@two_stores", "--nvm", "reram", "--report", &b]), 0);
    let cycles = |f: &str| {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(f).unwrap()).unwrap();
        v["cycles"].as_u64().unwrap()
    };
    assert!(cycles(&b) > cycles(&a));
}
