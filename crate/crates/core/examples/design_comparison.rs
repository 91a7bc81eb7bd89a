//! Compares the cache designs on the locality loop across NVM timings.

use replaycache::compiler::{compile, CompileOptions};
use replaycache::corpus;
use replaycache::report::{bench_csv, cmd_bench, BenchConfig};

fn main() -> anyhow::Result<()> {
    let c = compile(&corpus::program(corpus::LOCALITY_LOOP), &CompileOptions::default())?;
    let rows = cmd_bench(&[(corpus::LOCALITY_LOOP.to_string(), c)], &BenchConfig::default())?;
    println!("{:<8} {:<12} {:>7} {:>8} {:>9} {:>6}", "nvm", "design", "cycles", "speedup", "hit rate", "ilp%");
    for r in &rows {
        let ilp = r.ilp_efficiency.map_or("-".into(), |x| format!("{x:.1}"));
        println!("{:<8} {:<12} {:>7} {:>7.2}x {:>9.3} {:>6}", r.nvm, r.design, r.cycles, r.speedup, r.hit_rate, ilp);
    }
    if std::env::args().any(|a| a == "--csv") {
        print!("{}", bench_csv(&rows));
    }
    Ok(())
}
