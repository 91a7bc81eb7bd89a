use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::compiler::CompiledProgram;
use crate::machine::{run_executable, Design, Executable, MachineConfig, MachineError, NvmTech, NvmTiming, Outage, RunReport};
use crate::power::{schedule_events, PowerTrace, ThresholdSet};

use super::ilp::compute_ilp_efficiency;

/// Bumped whenever bench columns change.
pub const BENCH_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct PowerSetup {
    pub trace: PowerTrace,
    pub thresholds: ThresholdSet,
    pub cycles_per_ns: f64,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub designs: Vec<Design>,
    pub timings: Vec<NvmTiming>,
    /// Base machine; its NVM timing is replaced per row.
    pub machine: MachineConfig,
    pub power: Option<PowerSetup>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            designs: Design::COMPARED.to_vec(),
            timings: NvmTech::ALL.map(NvmTiming::for_tech).to_vec(),
            machine: MachineConfig::default(),
            power: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub version: u32,
    pub program: String,
    pub design: String,
    pub nvm: String,
    pub ckpt: String,
    pub cycles: u64,
    pub wall_cycles: u64,
    pub speedup: f64,
    pub energy_total: f64,
    pub frac_core: f64,
    pub frac_cache: f64,
    pub frac_nvm: f64,
    /// Empty for designs without region-level persistence.
    pub ilp_efficiency: Option<f64>,
    pub hit_rate: f64,
    pub n_stores: u64,
    pub boundary_stall_cycles: u64,
    pub outages: u64,
    pub recoveries: u64,
    pub uncheckpointed: u64,
    pub persistence_violations: u64,
    pub final_nvm_digest: String,
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Outages a trace induces for one design and machine.
pub fn outages_for(setup: &PowerSetup, design: Design, cfg: &MachineConfig) -> Vec<Outage> {
    let th = setup.thresholds.for_design(design, cfg.checkpoint);
    schedule_events(&setup.trace, &th, setup.cycles_per_ns, cfg.checkpoint_cycles()).outages()
}

/// Runs every (program, design, timing) combination. Rows come back in that
/// nesting order whatever the thread count; NoCache is always simulated to
/// normalise speedups.
pub fn cmd_bench(corpus: &[(String, CompiledProgram)], cfg: &BenchConfig) -> Result<Vec<BenchRow>, MachineError> {
    let mut designs = cfg.designs.clone();
    if !designs.contains(&Design::NoCache) {
        designs.push(Design::NoCache);
    }
    let exes: Vec<Arc<Executable>> = corpus
        .iter()
        .map(|(_, c)| Executable::new(&c.program, Some(c.metadata.clone()), cfg.machine.k).map(Arc::new))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, Design, NvmTiming)> = (0..corpus.len())
        .flat_map(|p| designs.iter().flat_map(move |&d| cfg.timings.iter().map(move |&t| (p, d, t))))
        .collect();
    let reports: Vec<RunReport> = jobs
        .par_iter()
        .map(|&(p, d, t)| {
            let mc = MachineConfig { nvm: t, ..cfg.machine.clone() };
            let outages = cfg.power.as_ref().map(|s| outages_for(s, d, &mc)).unwrap_or_default();
            run_executable(exes[p].clone(), Arc::new(mc), d, &outages).map(|(_, r)| r)
        })
        .collect::<Result<_, _>>()?;

    let baseline: HashMap<(usize, NvmTech), u64> = jobs
        .iter()
        .zip(&reports)
        .filter(|((_, d, _), _)| *d == Design::NoCache)
        .map(|(&(p, _, t), r)| ((p, t.tech), r.cycles))
        .collect();
    Ok(jobs
        .iter()
        .zip(&reports)
        .filter(|((_, d, _), _)| cfg.designs.contains(d))
        .map(|(&(p, _, t), r)| {
            let total = r.energy.total();
            let frac = |x: f64| if total > 0.0 { round6(x / total) } else { 0.0 };
            BenchRow {
                version: BENCH_VERSION,
                program: corpus[p].0.clone(),
                design: r.design.clone(),
                nvm: r.nvm.clone(),
                ckpt: r.ckpt.clone(),
                cycles: r.cycles,
                wall_cycles: r.wall_cycles,
                speedup: round6(baseline[&(p, t.tech)] as f64 / r.cycles.max(1) as f64),
                energy_total: round6(total),
                frac_core: frac(r.energy.core),
                frac_cache: frac(r.energy.cache),
                frac_nvm: frac(r.energy.nvm),
                ilp_efficiency: compute_ilp_efficiency(r, r.persist_cycles).ok().map(|i| round6(i.efficiency)),
                hit_rate: round6(r.hit_rate()),
                n_stores: r.n_stores,
                boundary_stall_cycles: r.boundary_stall_cycles,
                outages: r.outages,
                recoveries: r.recoveries,
                uncheckpointed: r.uncheckpointed,
                persistence_violations: r.persistence_violations,
                final_nvm_digest: r.final_nvm_digest.clone(),
            }
        })
        .collect())
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(BENCH_COLUMNS).expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub const BENCH_COLUMNS: [&str; 21] = [
    "version",
    "program",
    "design",
    "nvm",
    "ckpt",
    "cycles",
    "wall_cycles",
    "speedup",
    "energy_total",
    "frac_core",
    "frac_cache",
    "frac_nvm",
    "ilp_efficiency",
    "hit_rate",
    "n_stores",
    "boundary_stall_cycles",
    "outages",
    "recoveries",
    "uncheckpointed",
    "persistence_violations",
    "final_nvm_digest",
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, CompileOptions};
    use crate::corpus;

    fn small() -> Vec<(String, CompiledProgram)> {
        ["two_stores", "diamond"]
            .iter()
            .map(|n| (n.to_string(), compile(&corpus::program(n), &CompileOptions::default()).unwrap()))
            .collect()
    }

    #[test]
    fn header_matches_columns_and_nocache_is_one() {
        let rows = cmd_bench(&small(), &BenchConfig { timings: vec![NvmTiming::reram()], ..Default::default() }).unwrap();
        let csv = bench_csv(&rows);
        assert_eq!(csv.lines().next().unwrap(), BENCH_COLUMNS.join(","));
        assert_eq!(rows.len(), 2 * Design::COMPARED.len());
        for r in rows.iter().filter(|r| r.design == "nocache") {
            assert_eq!(r.speedup, 1.0);
        }
        assert_eq!(bench_csv(&rows), bench_csv(&cmd_bench(&small(), &BenchConfig { timings: vec![NvmTiming::reram()], ..Default::default() }).unwrap()));
    }
}
