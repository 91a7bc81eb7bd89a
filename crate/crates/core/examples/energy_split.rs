//! Shrinks the capacitor budget and watches regions split so each recovery
//! block stays affordable.

use replaycache::compiler::{compile, CompileOptions};
use replaycache::corpus;
use replaycache::recovery::{estimate_recovery_energy, EnergyModel};

fn main() {
    let p = corpus::program("spill_pressure");
    for budget in [2000.0, 200.0, 150.0, 120.0, 100.0] {
        let energy = EnergyModel { capacitor_budget: budget, ..EnergyModel::default() };
        match compile(&p, &CompileOptions { energy, ..Default::default() }) {
            Ok(c) => {
                let worst = c.metadata.blocks.iter().map(|b| estimate_recovery_energy(b, &energy)).fold(0.0, f64::max);
                println!(
                    "budget {budget:>6.0} pJ: {:>3} regions, {} split boundaries, worst recovery {worst:.0} pJ",
                    c.metadata.regions.len(),
                    c.energy_splits
                );
            }
            Err(e) => println!("budget {budget:>6.0} pJ: {e}"),
        }
    }
}
