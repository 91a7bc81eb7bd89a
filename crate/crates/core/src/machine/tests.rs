use std::sync::Arc;

use super::*;
use crate::compiler::{compile, CompileOptions};
use crate::isa::parse_assembly;
use crate::memory::CheckpointKind;

fn build(src: &str, kind: CheckpointKind) -> Arc<Executable> {
    let p = parse_assembly(src).unwrap();
    let opts = CompileOptions { checkpoint: kind, ..Default::default() };
    let c = compile(&p, &opts).unwrap();
    Arc::new(Executable::new(&c.program, Some(c.metadata), 16).unwrap())
}

fn machine(src: &str, design: Design, cfg: MachineConfig) -> Machine {
    let exe = build(src, cfg.checkpoint);
    Machine::new(exe, Arc::new(cfg), design).unwrap()
}

fn store_then(filler: usize) -> String {
    let mut s = String::from("fn main {\ne:\n li v1, 64\n li v2, 5\n li v3, 1\n st v2 -> [v1+0]\n");
    for _ in 0..filler {
        s += " add v3, v3, v3\n";
    }
    s += " rboundary\n st v3 -> [v1+8]\n halt\n}";
    s
}

fn boundary_stall(filler: usize) -> u64 {
    let mut m = machine(&store_then(filler), Design::ReplayCache, MachineConfig::default());
    m.run().unwrap();
    m.stats().store_stalls[0].stall
}

#[test]
fn reram_latencies() {
    let cfg = MachineConfig::default();
    assert_eq!(cfg.write_persist_cycles(), 31);
    assert_eq!(cfg.read_cycles(), 8);
}

#[test]
fn store_then_boundary_stalls_persist_minus_one() {
    let mut m = machine(&store_then(0), Design::ReplayCache, MachineConfig::default());
    assert_eq!(m.run().unwrap(), Event::Halted);
    let s = m.stats();
    assert_eq!(s.store_stalls[0].stall, 30);
    // The final region's store also waits at halt.
    assert_eq!(s.boundary_stall_cycles, 30);
    assert_eq!(s.persistence_violations, 0);
}

#[test]
fn enough_work_hides_the_persist() {
    assert_eq!(boundary_stall(40), 0);
    // clwb plus 30 instructions covers the 31 cycles.
    assert_eq!(boundary_stall(30), 0);
    assert_eq!(boundary_stall(29), 1);
}

#[test]
fn back_to_back_stores_wait_for_the_later_one() {
    let src = "fn main {\ne:\n li v1, 64\n li v2, 5\n st v2 -> [v1+0]\n st v2 -> [v1+8]\n rboundary\n halt\n}";
    let mut m = machine(src, Design::ReplayCache, MachineConfig::default());
    m.run().unwrap();
    let s = m.stats();
    assert_eq!(s.max_pending, 2);
    assert_eq!(s.boundary_stall_cycles, 30);
    let stalls: Vec<u64> = s.store_stalls.iter().map(|x| x.stall).collect();
    assert_eq!(stalls, vec![28, 30]);
}

#[test]
fn checkpoint_restore_round_trip() {
    let mut m = machine(&store_then(3), Design::ReplayCache, MachineConfig::default());
    for _ in 0..5 {
        m.step().unwrap();
    }
    let (regs, pc) = (m.regs().to_vec(), m.pc());
    m.checkpoint();
    m.restore();
    assert_eq!((m.regs().to_vec(), m.pc()), (regs, pc));
}

#[test]
fn quickrecall_checkpoint_cost() {
    let cfg = MachineConfig::default().with_checkpoint(CheckpointKind::QuickRecall);
    assert_eq!(cfg.checkpoint_cycles(), 18 * 31);
    let mut m = machine(&store_then(0), Design::ReplayCache, cfg);
    assert_eq!(m.checkpoint(), 18 * 31);
    assert_eq!(MachineConfig::default().checkpoint_cycles(), 18);
}

#[test]
fn power_off_empties_volatile_cache() {
    let mut m = machine(&store_then(2), Design::ReplayCache, MachineConfig::default());
    for _ in 0..6 {
        m.step().unwrap();
    }
    assert!(m.cache().unwrap().valid_lines() > 0);
    m.checkpoint();
    m.power_off(m.cycle());
    assert_eq!(m.cache().unwrap().valid_lines(), 0);
    assert_eq!(m.pending_persists(), 0);
}

/// Two stores X = 1 and Y = 1 are both in flight when power fails.
#[test]
fn in_flight_stores_are_replayed() {
    let src = "fn main {\ne:\n li v1, 0\n li v2, 64\n li v3, 1\n st v3 -> [v1+0]\n st v3 -> [v2+0]\n li v4, 2\n rboundary\n halt\n}";
    for kind in [CheckpointKind::Nvp, CheckpointKind::QuickRecall] {
        let cfg = MachineConfig::default().with_checkpoint(kind);
        let mut m = machine(src, Design::ReplayCache, cfg.clone());
        // Run until just after the second clwb.
        loop {
            m.step().unwrap();
            if m.pending_persists() == 2 {
                break;
            }
        }
        let (failure_pc, t) = (m.pc(), m.cycle());
        m.checkpoint();
        m.power_off(t);
        assert_eq!((m.nvm_word(0), m.nvm_word(64)), (0, 0));
        m.power_on(m.cycle() + 1000).unwrap();
        assert_eq!(m.mode(), Mode::Recovery);
        while m.mode() == Mode::Recovery {
            m.step().unwrap();
        }
        assert_eq!((m.nvm_word(0), m.nvm_word(64)), (1, 1));
        assert_eq!(m.pc(), failure_pc);
        assert_eq!(m.run().unwrap(), Event::Halted);
        let s = m.stats();
        assert_eq!((s.recoveries, s.replayed_stores, s.replay_mismatches), (1, 2, 0));
    }
}

#[test]
fn outage_before_any_store_is_a_pure_resume() {
    let mut m = machine(&store_then(0), Design::ReplayCache, MachineConfig::default());
    for _ in 0..3 {
        m.step().unwrap();
    }
    m.checkpoint();
    m.power_off(m.cycle());
    m.power_on(m.cycle() + 10).unwrap();
    assert_eq!(m.mode(), Mode::Normal);
    assert_eq!(m.stats().recoveries, 0);
}

#[test]
fn writethrough_and_nocache_pay_the_same_store() {
    let src = "fn main {\ne:\n li v1, 64\n li v2, 5\n st v2 -> [v1+0]\n halt\n}";
    let cycles = |d| {
        let mut m = machine(src, d, MachineConfig::default());
        m.run().unwrap();
        m.stats().active_cycles
    };
    assert_eq!(cycles(Design::WriteThrough), cycles(Design::NoCache));
}

#[test]
fn replay_design_needs_metadata() {
    let p = parse_assembly("fn main {\ne:\n halt\n}").unwrap();
    let c = compile(&p, &CompileOptions::default()).unwrap();
    let exe = Arc::new(Executable::new(&c.program, None, 16).unwrap());
    let err = Machine::new(exe, Arc::new(MachineConfig::default()), Design::ReplayCache).unwrap_err();
    assert_eq!(err, MachineError::MissingMetadata);
}

#[test]
fn unaligned_access_faults() {
    let mut m = machine("fn main {\ne:\n li v1, 3\n ld [v1+0] -> v2\n halt\n}", Design::NoCache, MachineConfig::default());
    assert_eq!(m.run().unwrap_err(), MachineError::UnalignedAccess(3));
}
