use std::sync::Arc;

use replaycache::compiler::{compile, CompileOptions};
use replaycache::corpus;
use replaycache::isa::RegFile;
use replaycache::machine::{Design, Executable, MachineConfig};
use replaycache::memory::CheckpointKind;
use replaycache::oracle::mutants::all_mutants;
use replaycache::oracle::{exhaustive_crash_sweep, verify_store_integrity, SweepOptions};

fn exe(name: &str, kind: CheckpointKind) -> Arc<Executable> {
    let c = compile(&corpus::program(name), &CompileOptions { checkpoint: kind, ..Default::default() }).unwrap();
    Arc::new(Executable::new(&c.program, Some(c.metadata), 16).unwrap())
}

#[test]
fn corpus_compiles_clean() {
    for name in corpus::names() {
        let c = compile(&corpus::program(name), &CompileOptions::default()).unwrap();
        let v = verify_store_integrity(&c.program, &c.boundaries, RegFile::default());
        assert!(v.is_empty(), "{name}: {v:?}");
    }
}

#[test]
fn every_mutant_is_caught() {
    for name in ["two_stores", "diamond", "counter_calls"] {
        let c = compile(&corpus::program(name), &CompileOptions::default()).unwrap();
        for m in all_mutants(&c.program) {
            let v = verify_store_integrity(&m.program, &m.boundaries, RegFile::default());
            assert!(!v.is_empty(), "{name}/{} not caught", m.name);
        }
    }
}

#[test]
fn sweep_small_programs() {
    for name in ["two_stores", "diamond", "nested_calls"] {
        for kind in [CheckpointKind::Nvp, CheckpointKind::QuickRecall] {
            let cfg = MachineConfig::default().with_checkpoint(kind);
            let r = exhaustive_crash_sweep(exe(name, kind), &cfg, Design::ReplayCache, &SweepOptions::default()).unwrap();
            assert!(r.passed(), "{name} {kind:?}: {:?}", r.mismatches.first());
            assert!(r.injections > 0);
        }
    }
}

#[test]
fn second_outage_during_recovery() {
    for after in [1, 5, 20] {
        let opts = SweepOptions { second_outage_after: Some(after), ..Default::default() };
        let r = exhaustive_crash_sweep(exe("array_sum", CheckpointKind::Nvp), &MachineConfig::default(), Design::ReplayCache, &opts)
            .unwrap();
        assert!(r.passed(), "after {after}: {:?}", r.mismatches.first());
    }
}

#[test]
fn unsafe_and_uncheckpointed_fail() {
    let cfg = MachineConfig::default();
    let e = exe("two_stores", CheckpointKind::Nvp);
    let r = exhaustive_crash_sweep(e, &cfg, Design::WriteBackUnsafe, &SweepOptions::default()).unwrap();
    assert!(!r.passed());
    let opts = SweepOptions { uncheckpointed: true, ..Default::default() };
    // A cold restart repeats the read-modify-write increments.
    let r = exhaustive_crash_sweep(exe("counter_calls", CheckpointKind::Nvp), &cfg, Design::ReplayCache, &opts).unwrap();
    assert!(!r.passed());
}

#[test]
fn sweep_bound_rejects_long_runs() {
    let opts = SweepOptions { bound: 10, ..Default::default() };
    assert!(exhaustive_crash_sweep(exe("fib", CheckpointKind::Nvp), &MachineConfig::default(), Design::ReplayCache, &opts).is_err());
}
