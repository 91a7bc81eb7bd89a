use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::machine::{
    apply_outage, nvm_digest, run_machine, Design, Event, Executable, Machine, MachineConfig, MachineError, Outage,
    StoreRecord,
};

use super::{compare_nvm_states, ByteDiff, Footprint, OracleError, DEFAULT_SWEEP_BOUND};

/// Outcome of an outage-free run.
#[derive(Debug, Clone)]
pub struct GoldenResult {
    pub final_nvm_digest: String,
    pub final_nvm_image: Vec<u8>,
    pub retired_store_log: Vec<StoreRecord>,
    pub total_cycles: u64,
    pub footprint: Footprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Injection {
    EveryCycle,
    Sample { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Largest golden run accepted, in cycles.
    pub bound: u64,
    pub injection: Injection,
    /// Take a second outage this many cycles after the machine is powered
    /// back on. An outage landing in recovery code waits for it to finish.
    pub second_outage_after: Option<u64>,
    /// Let the checkpoint fail, so the machine cold-boots. Shows the
    /// failure mode; not expected to pass.
    pub uncheckpointed: bool,
    pub off_cycles: u64,
    /// Forked machines held in memory at once.
    pub batch: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            bound: DEFAULT_SWEEP_BOUND,
            injection: Injection::EveryCycle,
            second_outage_after: None,
            uncheckpointed: false,
            off_cycles: 1000,
            batch: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub k: u64,
    pub diff_bytes: usize,
    /// Up to eight differing bytes, golden first.
    pub first_diffs: Vec<ByteDiff>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepReport {
    pub design: String,
    pub nvm: String,
    pub ckpt: String,
    pub golden_cycles: u64,
    pub golden_digest: String,
    pub injections: u64,
    pub mismatches: Vec<Mismatch>,
    pub recoveries: u64,
    pub replayed_stores: u64,
    pub replay_mismatches: u64,
    pub persistence_violations: u64,
    pub max_recovery_cycles: u64,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.replay_mismatches == 0 && self.persistence_violations == 0
    }
}

pub fn golden_run(
    exe: Arc<Executable>,
    cfg: &MachineConfig,
    design: Design,
    bound: u64,
) -> Result<GoldenResult, OracleError> {
    let cfg = MachineConfig { max_cycles: bound + 1, ..cfg.clone() };
    let program_data = exe.data.clone();
    let mut m = Machine::new(exe, Arc::new(cfg), design)?;
    m.record_stores();
    match m.run() {
        Ok(_) => {}
        Err(MachineError::NonTerminating(_)) => return Err(OracleError::NonTerminatingRun(bound)),
        Err(e) => return Err(e.into()),
    }
    Ok(GoldenResult {
        final_nvm_digest: nvm_digest(m.nvm()),
        final_nvm_image: m.nvm().to_vec(),
        retired_store_log: m.store_trace().to_vec(),
        total_cycles: m.stats().active_cycles,
        footprint: Footprint::of_run(&program_data, m.store_trace()),
    })
}

struct Outcome {
    k: u64,
    mismatch: Option<Mismatch>,
    recoveries: u64,
    replayed: u64,
    replay_mismatches: u64,
    violations: u64,
    recovery_cycles: u64,
}

fn inject(k: u64, mut m: Machine, golden: &GoldenResult, opts: &SweepOptions) -> Outcome {
    let first = if opts.uncheckpointed {
        Outage { ckpt_at: k, off_at: k, on_at: k + opts.off_cycles, forced: false }
    } else {
        Outage::forced(k, opts.off_cycles)
    };
    let run = apply_outage(&mut m, &first).and_then(|()| {
        let rest: Vec<Outage> =
            opts.second_outage_after.map(|d| Outage::forced(m.cycle() + d, opts.off_cycles)).into_iter().collect();
        run_machine(&mut m, &rest)
    });
    let mismatch = match run {
        Err(e) => Some(Mismatch { k, diff_bytes: 0, first_diffs: vec![], error: Some(e.to_string()) }),
        Ok(()) => {
            let diffs = compare_nvm_states(&golden.final_nvm_image, m.nvm(), &golden.footprint);
            (!diffs.is_empty()).then(|| Mismatch {
                k,
                diff_bytes: diffs.len(),
                first_diffs: diffs.into_iter().take(8).collect(),
                error: None,
            })
        }
    };
    let s = m.stats();
    Outcome {
        k,
        mismatch,
        recoveries: s.recoveries,
        replayed: s.replayed_stores,
        replay_mismatches: s.replay_mismatches,
        violations: s.persistence_violations,
        recovery_cycles: s.recovery_cycles,
    }
}

/// Injects an outage at every (or a sample of) cycle of the golden run and
/// checks the final NVM state against it.
///
/// The golden machine is stepped once; at each injection cycle it is forked,
/// and forks are finished in parallel.
pub fn exhaustive_crash_sweep(
    exe: Arc<Executable>,
    cfg: &MachineConfig,
    design: Design,
    opts: &SweepOptions,
) -> Result<SweepReport, OracleError> {
    let golden = golden_run(exe.clone(), cfg, design, opts.bound)?;
    let total = golden.total_cycles;
    let ks: Vec<u64> = match opts.injection {
        Injection::EveryCycle => (0..total).collect(),
        Injection::Sample { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = count.min(total as usize);
            let mut v: Vec<u64> =
                rand::seq::index::sample(&mut rng, total as usize, n).into_iter().map(|k| k as u64).collect();
            v.sort_unstable();
            v
        }
    };
    // Crashed runs re-execute work, so allow them the bound several times over.
    let run_cfg = MachineConfig { max_cycles: 8 * opts.bound + 8 * opts.off_cycles + 100_000, ..cfg.clone() };
    let mut g = Machine::new(exe, Arc::new(run_cfg.clone()), design)?;
    let mut outcomes = Vec::with_capacity(ks.len());
    for chunk in ks.chunks(opts.batch.max(1)) {
        let mut forks = Vec::with_capacity(chunk.len());
        for &k in chunk {
            g.set_deadline(Some(k));
            match g.run()? {
                Event::OutagePending => forks.push((k, g.clone())),
                _ => break,
            }
        }
        let done: Vec<Outcome> = forks.into_par_iter().map(|(k, m)| inject(k, m, &golden, opts)).collect();
        outcomes.extend(done);
    }
    outcomes.sort_by_key(|o| o.k);
    Ok(SweepReport {
        design: design.name().into(),
        nvm: run_cfg.nvm.tech.name().into(),
        ckpt: run_cfg.checkpoint.name().into(),
        golden_cycles: total,
        golden_digest: golden.final_nvm_digest.clone(),
        injections: outcomes.len() as u64,
        recoveries: outcomes.iter().map(|o| o.recoveries).sum(),
        replayed_stores: outcomes.iter().map(|o| o.replayed).sum(),
        replay_mismatches: outcomes.iter().map(|o| o.replay_mismatches).sum(),
        persistence_violations: outcomes.iter().map(|o| o.violations).sum(),
        max_recovery_cycles: outcomes.iter().map(|o| o.recovery_cycles).max().unwrap_or(0),
        mismatches: outcomes.into_iter().filter_map(|o| o.mismatch).collect(),
    })
}
