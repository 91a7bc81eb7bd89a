//! Command-line front end. `run_cli` returns the process exit code: 0 on
//! success, 1 when a check finds violations or mismatches, 2 on bad usage
//! or unreadable input.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::compiler::{compile, lower_program, CompileError, CompileOptions, CompiledProgram, RegionBoundarySet};
use crate::config::SimConfig;
use crate::corpus;
use crate::isa::{linearize, parse_assembly, Program, RegFile};
use crate::machine::{run_executable, Design, Executable, MachineConfig, NvmTech, Outage, RunReport};
use crate::memory::CheckpointKind;
use crate::oracle::{exhaustive_crash_sweep, verify_store_integrity, Injection, SweepOptions};
use crate::power::{load_trace, schedule_events, synthesize_trace, PowerTrace, SynthKind};
use crate::recovery::{parse_metadata, write_metadata, RecoveryError};
use crate::report::{bench_csv, cmd_bench, cmd_stats, compute_ilp_efficiency, BenchConfig, PowerSetup};

#[derive(Debug, Parser)]
#[command(name = "replaycache", version, about = "Region-level store persistence for intermittent processors")]
pub struct Cli {
    /// TOML file with timing, energy and threshold constants.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for sampled injection and synthetic traces.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile virtual-register assembly into regions with recovery metadata.
    Compile(CompileArgs),
    /// Simulate a program on one design.
    Run(RunArgs),
    /// Check store integrity of the compiled program.
    Verify(VerifyArgs),
    /// Inject an outage at every cycle (or a sample) and compare with the golden run.
    Fuzz(FuzzArgs),
    /// Compare designs and NVM timings over a set of programs.
    Bench(BenchArgs),
    /// Region statistics and binary-size overhead.
    Stats(StatsArgs),
    /// Per-region and program-wide ILP efficiency.
    Ilp(IlpArgs),
}

/// A program: a file path, or `@name` for a built-in corpus program.
#[derive(Debug, Args)]
pub struct InputArgs {
    pub input: String,
    /// Treat the input as compiled code described by this metadata file.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    #[arg(long, default_value = "nvp", value_parser = parse_ckpt)]
    pub ckpt: CheckpointKind,
    /// Register file size.
    #[arg(long = "k-phys")]
    pub k_phys: Option<u8>,
    /// Only cut regions at entries, calls, loop headers and pressure points.
    #[arg(long)]
    pub no_merge_cuts: bool,
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Write assembly here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub emit_metadata: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// Voltage trace CSV (`t_ns,volts`).
    #[arg(long, conflicts_with_all = ["outage_at", "synth"])]
    pub trace: Option<PathBuf>,
    /// Forced checkpoint and power loss at these cycles.
    #[arg(long, value_delimiter = ',', conflicts_with = "synth")]
    pub outage_at: Vec<u64>,
    /// Generate a trace (`square` or `poisson`) from the config's synth table.
    #[arg(long, value_parser = parse_synth)]
    pub synth: Option<SynthKind>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "replaycache", value_parser = parse_design)]
    pub design: Design,
    #[arg(long, default_value = "reram", value_parser = parse_nvm)]
    pub nvm: NvmTech,
    #[arg(long)]
    pub cache_size: Option<usize>,
    #[arg(long)]
    pub ways: Option<usize>,
    #[command(flatten)]
    pub power: PowerArgs,
    /// Write the report here; `.json` or `.jsonl` selects JSON lines, anything else CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Args)]
pub struct FuzzArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "replaycache", value_parser = parse_design)]
    pub design: Design,
    #[arg(long, default_value = "reram", value_parser = parse_nvm)]
    pub nvm: NvmTech,
    /// Inject at every cycle of the golden run (the default).
    #[arg(long, conflicts_with = "sample")]
    pub every_cycle: bool,
    /// Inject at N cycles drawn with `--seed`.
    #[arg(long)]
    pub sample: Option<usize>,
    /// Take a second outage this many cycles after power returns.
    #[arg(long)]
    pub second_outage_after: Option<u64>,
    /// Let every checkpoint fail.
    #[arg(long)]
    pub uncheckpointed: bool,
    /// Write the sweep report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Programs (paths or `@name`); the built-in corpus by default.
    pub inputs: Vec<String>,
    #[arg(long, value_delimiter = ',', value_parser = parse_design)]
    pub designs: Vec<Design>,
    #[arg(long, value_delimiter = ',', value_parser = parse_nvm)]
    pub nvm: Vec<NvmTech>,
    #[arg(long, default_value = "nvp", value_parser = parse_ckpt)]
    pub ckpt: CheckpointKind,
    #[arg(long, conflicts_with = "synth")]
    pub trace: Option<PathBuf>,
    #[arg(long, value_parser = parse_synth)]
    pub synth: Option<SynthKind>,
    /// Write CSV here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct IlpArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "reram", value_parser = parse_nvm)]
    pub nvm: NvmTech,
    #[command(flatten)]
    pub power: PowerArgs,
    #[arg(long)]
    pub json: bool,
}

fn parse_design(s: &str) -> Result<Design, String> {
    Design::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = Design::ALL.iter().map(|d| d.name()).collect();
        format!("unknown design `{s}` (one of {})", names.join(", "))
    })
}

fn parse_nvm(s: &str) -> Result<NvmTech, String> {
    NvmTech::from_name(s).ok_or_else(|| format!("unknown NVM `{s}` (reram, sttram or pcm)"))
}

fn parse_ckpt(s: &str) -> Result<CheckpointKind, String> {
    CheckpointKind::from_name(s).ok_or_else(|| format!("unknown checkpoint kind `{s}` (nvp or quickrecall)"))
}

fn parse_synth(s: &str) -> Result<SynthKind, String> {
    match s {
        "square" => Ok(SynthKind::Square),
        "poisson" => Ok(SynthKind::Poisson),
        _ => Err(format!("unknown trace shape `{s}` (square or poisson)")),
    }
}

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Violations,
}

impl Outcome {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Outcome::Clean
        } else {
            Outcome::Violations
        }
    }

    pub fn code(self) -> i32 {
        match self {
            Outcome::Clean => 0,
            Outcome::Violations => 1,
        }
    }
}

/// Parses arguments and runs one command, printing to stdout and stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(o) => o.code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match &cli.command {
        Command::Compile(a) => cmd_compile(&cfg, a),
        Command::Run(a) => cmd_run(&cfg, a),
        Command::Verify(a) => cmd_verify(&cfg, a),
        Command::Fuzz(a) => cmd_fuzz(&cfg, a),
        Command::Bench(a) => cmd_bench_cli(&cfg, a),
        Command::Stats(a) => cmd_stats_cli(&cfg, a),
        Command::Ilp(a) => cmd_ilp(&cfg, a),
    }
}

/// Reads a program from a path or the built-in corpus (`@name`).
pub fn load_source(spec: &str) -> Result<Program> {
    if let Some(name) = spec.strip_prefix('@') {
        let src = corpus::source(name).ok_or_else(|| {
            anyhow!("no built-in program `{name}` (have: {})", corpus::names().collect::<Vec<_>>().join(", "))
        })?;
        return Ok(parse_assembly(src)?);
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?;
    parse_assembly(&text).with_context(|| format!("parsing {spec}"))
}

fn options(cfg: &SimConfig, a: &InputArgs) -> CompileOptions {
    let mut o = cfg.compile_options(a.ckpt);
    if let Some(k) = a.k_phys {
        o.regfile = RegFile::new(k);
    }
    o.partition.cut_at_merges = !a.no_merge_cuts;
    o
}

fn regfile(cfg: &SimConfig, a: &InputArgs) -> RegFile {
    RegFile::new(a.k_phys.unwrap_or(cfg.machine.k))
}

/// The compiled program named by the input arguments.
pub fn prepare(cfg: &SimConfig, a: &InputArgs) -> Result<CompiledProgram> {
    let program = load_source(&a.input)?;
    match &a.metadata {
        None => Ok(compile(&program, &options(cfg, a))?),
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let metadata = parse_metadata(&text)?;
            if metadata.kind != a.ckpt {
                bail!("metadata is for {} checkpointing; pass --ckpt {}", metadata.kind.name(), metadata.kind.name());
            }
            let program = linearize(&program);
            Ok(CompiledProgram {
                boundaries: RegionBoundarySet::from_program(&program),
                program,
                metadata,
                allocations: Default::default(),
                energy_splits: 0,
            })
        }
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_compile(cfg: &SimConfig, a: &CompileArgs) -> Result<Outcome> {
    let program = load_source(&a.input.input)?;
    let opts = options(cfg, &a.input);
    let (text, meta) = match compile(&program, &opts) {
        Ok(c) => (c.program.to_string(), Some(write_metadata(&c.metadata))),
        Err(CompileError::Recovery(RecoveryError::NonStraightLineRegion { start_pc, pc }))
            if a.input.no_merge_cuts && a.emit_metadata.is_none() =>
        {
            eprintln!(
                "note: region {start_pc:#x} is not straight-line (pc {pc:#x}); emitting code without recovery metadata"
            );
            (lower_program(&program, &opts)?.0.to_string(), None)
        }
        Err(e) => return Err(e.into()),
    };
    write_or_print(a.output.as_deref(), &text)?;
    if let (Some(p), Some(m)) = (&a.emit_metadata, meta) {
        fs::write(p, m).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(Outcome::Clean)
}

fn trace_for(cfg: &SimConfig, p: &PowerArgs) -> Result<Option<PowerTrace>> {
    Ok(match (&p.trace, p.synth) {
        (Some(path), _) => Some(load_trace(path)?),
        (None, Some(kind)) => Some(synthesize_trace(kind, &cfg.synth, cfg.seed)?),
        (None, None) => None,
    })
}

fn outages(cfg: &SimConfig, p: &PowerArgs, design: Design, mc: &MachineConfig) -> Result<Vec<Outage>> {
    if !p.outage_at.is_empty() {
        return Ok(p.outage_at.iter().map(|&k| Outage::forced(k, mc.off_cycles)).collect());
    }
    Ok(match trace_for(cfg, p)? {
        Some(t) => {
            let th = cfg.thresholds.for_design(design, mc.checkpoint);
            let s = schedule_events(&t, &th, cfg.cycles_per_ns(), mc.checkpoint_cycles());
            for u in &s.uncheckpointed {
                eprintln!(
                    "warning: supply drops below vmin at cycle {} before the checkpoint started at {} completes",
                    u.off_cycle, u.ckpt_cycle
                );
            }
            s.outages()
        }
        None => Vec::new(),
    })
}

fn machine(cfg: &SimConfig, a: &InputArgs, nvm: NvmTech) -> MachineConfig {
    let mut m = cfg.machine_for(nvm, a.ckpt);
    m.k = regfile(cfg, a).k;
    m
}

fn simulate(c: &CompiledProgram, mc: MachineConfig, design: Design, outages: &[Outage]) -> Result<RunReport> {
    let exe = Executable::new(&c.program, Some(c.metadata.clone()), mc.k)?;
    Ok(run_executable(Arc::new(exe), Arc::new(mc), design, outages)?.1)
}

fn cmd_run(cfg: &SimConfig, a: &RunArgs) -> Result<Outcome> {
    let c = prepare(cfg, &a.input)?;
    let mut mc = machine(cfg, &a.input, a.nvm);
    if let Some(s) = a.cache_size {
        mc.cache.size_bytes = s;
    }
    if let Some(w) = a.ways {
        mc.cache.ways = w;
    }
    mc.cache.check().map_err(|e| anyhow!(e))?;
    let outages = outages(cfg, &a.power, a.design, &mc)?;
    let r = simulate(&c, mc, a.design, &outages)?;
    let json = a.report.as_ref().and_then(|p| p.extension()).is_some_and(|e| e == "json" || e == "jsonl");
    let text = if json {
        format!("{}\n", r.to_json())
    } else {
        format!("{}\n{}\n", RunReport::csv_header(), r.csv_row())
    };
    write_or_print(a.report.as_deref(), &text)?;
    if a.report.is_some() {
        println!("{} cycles, {} outages, {} recoveries, digest {}", r.cycles, r.outages, r.recoveries, r.final_nvm_digest);
    }
    Ok(Outcome::from_ok(r.persistence_violations == 0 && r.replay_mismatches == 0))
}

fn cmd_verify(cfg: &SimConfig, a: &VerifyArgs) -> Result<Outcome> {
    let c = prepare(cfg, &a.input)?;
    let v = verify_store_integrity(&c.program, &c.boundaries, regfile(cfg, &a.input));
    for x in &v {
        println!("{x}");
    }
    println!("{} violations in {} regions", v.len(), c.metadata.regions.len());
    Ok(Outcome::from_ok(v.is_empty()))
}

fn cmd_fuzz(cfg: &SimConfig, a: &FuzzArgs) -> Result<Outcome> {
    let c = prepare(cfg, &a.input)?;
    let mc = machine(cfg, &a.input, a.nvm);
    let exe = Arc::new(Executable::new(&c.program, Some(c.metadata.clone()), mc.k)?);
    let injection = match a.sample {
        Some(count) => Injection::Sample { count, seed: cfg.seed },
        None => Injection::EveryCycle,
    };
    let opts = SweepOptions {
        bound: cfg.sweep_bound,
        injection,
        second_outage_after: a.second_outage_after,
        uncheckpointed: a.uncheckpointed,
        off_cycles: mc.off_cycles,
        ..SweepOptions::default()
    };
    let r = exhaustive_crash_sweep(exe, &mc, a.design, &opts)?;
    if let Some(p) = &a.report {
        fs::write(p, serde_json::to_string_pretty(&r)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    println!(
        "{} {} {}: {} injections over {} golden cycles, {} mismatches, {} recoveries, {} stores replayed",
        r.design,
        r.nvm,
        r.ckpt,
        r.injections,
        r.golden_cycles,
        r.mismatches.len(),
        r.recoveries,
        r.replayed_stores
    );
    for m in r.mismatches.iter().take(5) {
        match &m.error {
            Some(e) => println!("  outage at cycle {}: {e}", m.k),
            None => println!("  outage at cycle {}: {} bytes differ", m.k, m.diff_bytes),
        }
    }
    Ok(Outcome::from_ok(r.passed()))
}

fn cmd_bench_cli(cfg: &SimConfig, a: &BenchArgs) -> Result<Outcome> {
    let names: Vec<String> = if a.inputs.is_empty() {
        corpus::names().map(|n| format!("@{n}")).collect()
    } else {
        a.inputs.clone()
    };
    let opts = cfg.compile_options(a.ckpt);
    let mut programs = Vec::new();
    for n in &names {
        let label = n.strip_prefix('@').map(str::to_string).unwrap_or_else(|| {
            Path::new(n).file_stem().map_or(n.clone(), |s| s.to_string_lossy().into_owned())
        });
        programs.push((label, compile(&load_source(n)?, &opts).with_context(|| format!("compiling {n}"))?));
    }
    let power = match (&a.trace, a.synth) {
        (Some(p), _) => Some(load_trace(p)?),
        (None, Some(k)) => Some(synthesize_trace(k, &cfg.synth, cfg.seed)?),
        _ => None,
    };
    let techs = if a.nvm.is_empty() { NvmTech::ALL.to_vec() } else { a.nvm.clone() };
    let bc = BenchConfig {
        designs: if a.designs.is_empty() { Design::COMPARED.to_vec() } else { a.designs.clone() },
        timings: techs.iter().map(|&t| cfg.timings.get(t)).collect(),
        machine: cfg.machine.clone().with_checkpoint(a.ckpt),
        power: power.map(|trace| PowerSetup { trace, thresholds: cfg.thresholds, cycles_per_ns: cfg.cycles_per_ns() }),
    };
    let rows = cmd_bench(&programs, &bc)?;
    write_or_print(a.output.as_deref(), &bench_csv(&rows))?;
    Ok(Outcome::from_ok(rows.iter().all(|r| r.persistence_violations == 0)))
}

fn cmd_stats_cli(cfg: &SimConfig, a: &StatsArgs) -> Result<Outcome> {
    let s = cmd_stats(&prepare(cfg, &a.input)?);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s)?);
        return Ok(Outcome::Clean);
    }
    println!("region      insts  stores  last-store-distance");
    for r in &s.regions {
        let d = r.last_store_distance.map_or("n/a".to_string(), |d| d.to_string());
        println!("{:#010x} {:>6} {:>7} {:>20}", r.start_pc, r.instructions, r.stores, d);
    }
    let d = s.mean_last_store_distance.map_or("n/a".to_string(), |d| format!("{d:.2}"));
    println!("mean        {:>6.2} {:>7.2} {:>20}", s.mean_instructions, s.mean_stores, d);
    println!(
        "binary: {} B application, {} B recovery code, {} B tables ({:.1}% overhead)",
        s.app_bytes, s.recovery_code_bytes, s.metadata_bytes, s.binary_overhead_pct
    );
    Ok(Outcome::Clean)
}

fn cmd_ilp(cfg: &SimConfig, a: &IlpArgs) -> Result<Outcome> {
    let c = prepare(cfg, &a.input)?;
    let mc = machine(cfg, &a.input, a.nvm);
    let latency = mc.write_persist_cycles();
    let outages = outages(cfg, &a.power, Design::ReplayCache, &mc)?;
    let r = simulate(&c, mc, Design::ReplayCache, &outages)?;
    let ilp = compute_ilp_efficiency(&r, latency)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&ilp)?);
        return Ok(Outcome::Clean);
    }
    println!("region      stores  ilp%");
    for g in &ilp.regions {
        println!("{:#010x} {:>7} {:>6.2}", g.region_start, g.stores, g.efficiency);
    }
    println!("program    {:>7} {:>6.2}  (C = {latency} cycles)", ilp.n_stores, ilp.efficiency);
    Ok(Outcome::Clean)
}
