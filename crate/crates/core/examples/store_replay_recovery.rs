//! Cuts power while a store is still in flight and follows recovery: the
//! region register and failure PC select the recovery block, and only the
//! stores that had retired are replayed.

use std::sync::Arc;

use replaycache::compiler::{compile, CompileOptions};
use replaycache::isa::parse_assembly;
use replaycache::machine::{nvm_digest, run_executable, Design, Event, Executable, Machine, MachineConfig};
use replaycache::recovery::lookup_recovery;

const SRC: &str = "fn main {
e:
  li v1, 0x100
  li v2, 11
  li v3, 22
  st v2 -> [v1+0]
  st v3 -> [v1+8]
  add v2, v2, v3
  st v2 -> [v1+16]
  halt
}";

fn main() -> anyhow::Result<()> {
    let c = compile(&parse_assembly(SRC)?, &CompileOptions::default())?;
    let exe = Arc::new(Executable::new(&c.program, Some(c.metadata.clone()), 16)?);
    let cfg = Arc::new(MachineConfig::default());
    let (_, golden) = run_executable(exe.clone(), cfg.clone(), Design::ReplayCache, &[])?;

    let mut m = Machine::new(exe, cfg, Design::ReplayCache)?;
    // Run until two stores have retired; their persists are still queued.
    let mut stores = 0;
    while stores < 2 {
        if let Event::Retired(pc) = m.step()? {
            stores += c.program.functions[0].instructions().any(|i| i.pc == pc && i.inst.is_store()) as usize;
        }
    }
    let region = m.region_register().expect("inside a region");
    println!("cycle {}: pc {:#x}, region {:#x}, {} persists pending", m.cycle(), m.pc(), region, m.pending_persists());

    let l = lookup_recovery(&c.metadata, region, m.pc())?;
    println!("recovery block at {:#x} replays {} stores", l.block_address, l.replay_count);

    let t = m.cycle();
    m.checkpoint();
    m.power_off(t);
    println!("after power loss NVM word 0x108 = {}", m.nvm_word(0x108));
    m.power_on(t + 1000)?;
    while m.run()? != Event::Halted {}
    let s = m.stats();
    println!("{} recoveries, {} stores replayed", s.recoveries, s.replayed_stores);
    println!("digest matches golden: {}", nvm_digest(m.nvm()) == golden.final_nvm_digest);
    Ok(())
}
