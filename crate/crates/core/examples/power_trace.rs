//! Turns a synthetic supply trace into checkpoint, power-off and power-on
//! events and runs a program through them.

use replaycache::compiler::{compile, CompileOptions};
use replaycache::corpus;
use replaycache::machine::{run_design, Design, MachineConfig};
use replaycache::power::{schedule_events, synthesize_trace, SynthKind, SynthParams, VoltageThresholds};

fn main() -> anyhow::Result<()> {
    let trace = synthesize_trace(SynthKind::Poisson, &SynthParams::default(), 7)?;
    let cfg = MachineConfig::default();
    let th = VoltageThresholds::nvp();
    let s = schedule_events(&trace, &th, 1.0 / cfg.clock_ns, cfg.checkpoint_cycles());
    println!("{} samples over {} us", trace.samples().len(), trace.duration_ns() / 1000);
    for e in s.events.iter().take(9) {
        println!("  cycle {:>7}: {:?}", e.cycle, e.kind);
    }
    println!("  ({} outages, {} without time to checkpoint)", s.outages().len(), s.uncheckpointed.len());

    let c = compile(&corpus::locality_loop(2000), &CompileOptions::default())?;
    let quiet = run_design(&c, Design::ReplayCache, &cfg, &[])?;
    let r = run_design(&c, Design::ReplayCache, &cfg, &s.outages())?;
    println!("powered cycles {} -> {} with {} outages and {} recoveries", quiet.cycles, r.cycles, r.outages, r.recoveries);
    println!("checkpoint {} / restore {} / recovery {} cycles", r.checkpoint_cycles, r.restore_cycles, r.recovery_cycles);
    println!("same final NVM: {}", r.final_nvm_digest == quiet.final_nvm_digest);
    Ok(())
}
