use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compiler::CompiledProgram;
use crate::memory::STACK_TOP;

use super::core::{Event, Machine, StoreStall};
use super::exec::Executable;
use super::{Design, MachineConfig, MachineError};

/// Bumped whenever report fields or CSV columns change.
pub const REPORT_VERSION: u32 = 1;

/// One power failure, in wall cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outage {
    /// Voltage falls through the checkpoint threshold.
    pub ckpt_at: u64,
    /// Power is lost.
    pub off_at: u64,
    /// Voltage is back above the restore threshold.
    pub on_at: u64,
    /// The checkpoint always succeeds, whatever the time to `off_at`.
    pub forced: bool,
}

impl Outage {
    /// Checkpoint and power loss at cycle `k`, back on `off_cycles` later.
    pub fn forced(k: u64, off_cycles: u64) -> Self {
        Outage { ckpt_at: k, off_at: k, on_at: k + off_cycles, forced: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub core: f64,
    pub cache: f64,
    pub nvm: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.core + self.cache + self.nvm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub version: u32,
    pub design: String,
    pub nvm: String,
    pub ckpt: String,
    /// Cycles spent powered, including checkpoint, restore and recovery.
    pub cycles: u64,
    pub wall_cycles: u64,
    pub instructions: u64,
    pub persist_cycles: u64,
    pub boundary_stall_cycles: u64,
    pub store_stalls: Vec<StoreStall>,
    pub n_stores: u64,
    pub n_no_stall: u64,
    pub n_stall: u64,
    pub hits: u64,
    pub misses: u64,
    pub energy: EnergyBreakdown,
    pub outages: u64,
    pub recoveries: u64,
    pub replayed_stores: u64,
    pub uncheckpointed: u64,
    pub persistence_violations: u64,
    pub replay_mismatches: u64,
    pub checkpoint_cycles: u64,
    pub restore_cycles: u64,
    pub recovery_cycles: u64,
    pub max_pending: usize,
    pub final_nvm_digest: String,
}

const CSV_COLUMNS: [&str; 25] = [
    "version",
    "design",
    "nvm",
    "ckpt",
    "cycles",
    "wall_cycles",
    "instructions",
    "persist_cycles",
    "boundary_stall_cycles",
    "n_stores",
    "n_no_stall",
    "n_stall",
    "hits",
    "misses",
    "energy_core",
    "energy_cache",
    "energy_nvm",
    "outages",
    "recoveries",
    "replayed_stores",
    "uncheckpointed",
    "persistence_violations",
    "replay_mismatches",
    "max_pending",
    "final_nvm_digest",
];

impl RunReport {
    pub fn from_machine(m: &Machine) -> Self {
        let s = m.stats();
        let cfg = m.config();
        let e = cfg.energy;
        let n_stall = s.store_stalls.iter().filter(|x| x.stall > 0).count() as u64;
        RunReport {
            version: REPORT_VERSION,
            design: m.design().name().into(),
            nvm: cfg.nvm.tech.name().into(),
            ckpt: cfg.checkpoint.name().into(),
            cycles: s.active_cycles,
            wall_cycles: m.cycle(),
            instructions: s.instructions,
            persist_cycles: cfg.write_persist_cycles(),
            boundary_stall_cycles: s.boundary_stall_cycles,
            store_stalls: s.store_stalls.clone(),
            n_stores: s.store_stalls.len() as u64,
            n_no_stall: s.store_stalls.len() as u64 - n_stall,
            n_stall,
            hits: s.hits,
            misses: s.misses,
            energy: EnergyBreakdown {
                core: s.active_cycles as f64 * e.core_per_cycle,
                cache: s.cache_accesses as f64 * e.cache_per_access,
                nvm: s.nvm_reads as f64 * e.nvm_read + s.nvm_writes as f64 * e.nvm_write,
            },
            outages: s.outages,
            recoveries: s.recoveries,
            replayed_stores: s.replayed_stores,
            uncheckpointed: s.uncheckpointed,
            persistence_violations: s.persistence_violations,
            replay_mismatches: s.replay_mismatches,
            checkpoint_cycles: s.checkpoint_cycles,
            restore_cycles: s.restore_cycles,
            recovery_cycles: s.recovery_cycles,
            max_pending: s.max_pending,
            final_nvm_digest: nvm_digest(m.nvm()),
        }
    }

    pub fn hit_rate(&self) -> f64 {
        let n = self.hits + self.misses;
        if n == 0 {
            0.0
        } else {
            self.hits as f64 / n as f64
        }
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        let f = |x: f64| format!("{x:.3}");
        [
            self.version.to_string(),
            self.design.clone(),
            self.nvm.clone(),
            self.ckpt.clone(),
            self.cycles.to_string(),
            self.wall_cycles.to_string(),
            self.instructions.to_string(),
            self.persist_cycles.to_string(),
            self.boundary_stall_cycles.to_string(),
            self.n_stores.to_string(),
            self.n_no_stall.to_string(),
            self.n_stall.to_string(),
            self.hits.to_string(),
            self.misses.to_string(),
            f(self.energy.core),
            f(self.energy.cache),
            f(self.energy.nvm),
            self.outages.to_string(),
            self.recoveries.to_string(),
            self.replayed_stores.to_string(),
            self.uncheckpointed.to_string(),
            self.persistence_violations.to_string(),
            self.replay_mismatches.to_string(),
            self.max_pending.to_string(),
            self.final_nvm_digest.clone(),
        ]
        .join(",")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// SHA-256 of the program-visible part of NVM (data and stack).
pub fn nvm_digest(nvm: &[u8]) -> String {
    hex::encode(Sha256::digest(&nvm[..STACK_TOP as usize]))
}

/// Takes one outage on a machine stopped at its deadline.
pub fn apply_outage(m: &mut Machine, o: &Outage) -> Result<(), MachineError> {
    let t = m.cycle();
    let off_at;
    if o.forced {
        off_at = o.off_at.max(t);
        m.checkpoint();
    } else if o.off_at.saturating_sub(o.ckpt_at) >= m.checkpoint_cost() {
        m.checkpoint();
        off_at = o.off_at.max(m.cycle());
    } else {
        m.skip_checkpoint();
        off_at = o.off_at.max(t);
    }
    m.power_off(off_at);
    m.power_on(o.on_at.max(off_at))
}

/// Runs to completion, taking outages in order of their checkpoint cycle.
/// Outages that would start after the program halts never happen.
pub fn run_machine(m: &mut Machine, outages: &[Outage]) -> Result<(), MachineError> {
    let mut pending: Vec<Outage> = outages.to_vec();
    pending.sort_by_key(|o| (o.ckpt_at, o.off_at));
    let mut next = pending.into_iter().peekable();
    loop {
        m.set_deadline(next.peek().map(|o| o.ckpt_at));
        match m.run()? {
            Event::Halted => return Ok(()),
            Event::OutagePending => {
                let o = next.next().expect("deadline implies an outage");
                apply_outage(m, &o)?;
            }
            _ => unreachable!(),
        }
    }
}

pub fn run_executable(
    exe: Arc<Executable>,
    cfg: Arc<MachineConfig>,
    design: Design,
    outages: &[Outage],
) -> Result<(Machine, RunReport), MachineError> {
    let mut m = Machine::new(exe, cfg, design)?;
    run_machine(&mut m, outages)?;
    let r = RunReport::from_machine(&m);
    Ok((m, r))
}

/// Simulates a compiled program on one design.
pub fn run_design(
    program: &CompiledProgram,
    design: Design,
    cfg: &MachineConfig,
    outages: &[Outage],
) -> Result<RunReport, MachineError> {
    let exe = Executable::new(&program.program, Some(program.metadata.clone()), cfg.k)?;
    Ok(run_executable(Arc::new(exe), Arc::new(cfg.clone()), design, outages)?.1)
}
