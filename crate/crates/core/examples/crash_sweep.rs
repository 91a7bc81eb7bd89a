//! Injects an outage at every cycle of a program and compares final NVM
//! with the outage-free run, for ReplayCache and for a write-back cache
//! with no replay.
//!
//!     cargo run --release --example crash_sweep [corpus-name]

use std::sync::Arc;

use replaycache::compiler::{compile, CompileOptions};
use replaycache::corpus;
use replaycache::machine::{Design, Executable, MachineConfig};
use replaycache::memory::CheckpointKind;
use replaycache::oracle::{exhaustive_crash_sweep, SweepOptions};

fn main() -> anyhow::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "bubble_sort".into());
    for kind in [CheckpointKind::Nvp, CheckpointKind::QuickRecall] {
        let c = compile(&corpus::program(&name), &CompileOptions { checkpoint: kind, ..Default::default() })?;
        let exe = Arc::new(Executable::new(&c.program, Some(c.metadata), 16)?);
        let cfg = MachineConfig::default().with_checkpoint(kind);
        for design in [Design::ReplayCache, Design::WriteBackUnsafe] {
            let r = exhaustive_crash_sweep(exe.clone(), &cfg, design, &SweepOptions::default())?;
            println!(
                "{name} {:<11} {:<12} {:>5} outages: {:>5} mismatches, {:>5} stores replayed, longest recovery {} cycles",
                kind.name(),
                design.name(),
                r.injections,
                r.mismatches.len(),
                r.replayed_stores,
                r.max_recovery_cycles
            );
            if let Some(m) = r.mismatches.first() {
                let d = &m.first_diffs[0];
                println!("    first: outage at cycle {}, byte {:#x} is {} instead of {}", m.k, d.address, d.b, d.a);
            }
        }
    }
    Ok(())
}
