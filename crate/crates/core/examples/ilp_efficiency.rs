//! How much of the persist latency each region hides, next to the static
//! shape of its regions.

use replaycache::compiler::{compile, CompileOptions};
use replaycache::corpus;
use replaycache::machine::{run_design, Design, MachineConfig, NvmTech};
use replaycache::report::{cmd_stats, compute_ilp_efficiency};

fn main() -> anyhow::Result<()> {
    println!("{:<15} {:>8} {:>7} {:>9} {:>7} {:>7} {:>7}", "program", "regions", "insts", "distance", "reram", "sttram", "pcm");
    for name in corpus::names() {
        let c = compile(&corpus::program(name), &CompileOptions::default())?;
        let s = cmd_stats(&c);
        let mut cols = Vec::new();
        for tech in NvmTech::ALL {
            let cfg = MachineConfig::default().with_nvm(tech);
            let r = run_design(&c, Design::ReplayCache, &cfg, &[])?;
            cols.push(compute_ilp_efficiency(&r, cfg.write_persist_cycles()).map_or("-".into(), |i| format!("{:.1}", i.efficiency)));
        }
        let d = s.mean_last_store_distance.map_or("-".into(), |d| format!("{d:.2}"));
        println!(
            "{:<15} {:>8} {:>7.2} {:>9} {:>7} {:>7} {:>7}",
            name,
            s.regions.len(),
            s.mean_instructions,
            d,
            cols[0],
            cols[1],
            cols[2]
        );
    }
    Ok(())
}
