use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::isa::{layout::assign_pcs, FlatFunction, Function, Inst, Instruction, Reg, RegFile, WORD_BYTES};

use super::liveness::{intervals_from, liveness, LiveInterval};
use super::preserve::preserve_with;
use super::CompileError;

/// Stack frame shape: an optional link-register slot at offset 0 followed
/// by spill slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameLayout {
    pub has_call: bool,
    pub spill_slots: u32,
}

impl FrameLayout {
    pub fn size(&self) -> i64 {
        (self.has_call as i64 + self.spill_slots as i64) * WORD_BYTES as i64
    }

    pub fn slot_offset(&self, slot: u32) -> i64 {
        (self.has_call as i64 + slot as i64) * WORD_BYTES as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spill {
    pub vreg: u32,
    pub stack_slot: u32,
    /// Offset from the stack pointer.
    pub offset: i64,
    pub spill_store_pcs: Vec<u64>,
    pub reload_pcs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Allocation {
    pub assignment: BTreeMap<u32, u8>,
    pub spills: Vec<Spill>,
}

/// Result of register allocation: the function rewritten to physical
/// registers, plus the final (extended) intervals it was allocated from.
#[derive(Debug, Clone)]
pub struct Allocated {
    pub function: Function,
    pub allocation: Allocation,
    pub frame: FrameLayout,
    pub intervals: Vec<LiveInterval>,
}

/// Linear-scan allocation over extended intervals.
///
/// Every allocatable register is caller-saved, so values live across a call
/// are spilled up front. When the scan runs out of registers it spills the
/// interval whose next read is furthest away; spilled values are rewritten
/// to short-lived temporaries around each access and the scan is repeated.
pub fn allocate_registers(func: &Function, rf: RegFile) -> Result<Allocated, CompileError> {
    let mut f = func.clone();
    assign_pcs(&mut f, 0);
    let has_call = f.instructions().any(|i| matches!(i.inst, Inst::Call { .. }));
    let mut frame = FrameLayout { has_call, spill_slots: 0 };
    let mut temps: HashSet<u32> = HashSet::new();
    let mut next_vreg = f.max_vreg().map_or(0, |m| m + 1);
    let mut spills: Vec<(u32, u32)> = Vec::new();

    loop {
        let flat = FlatFunction::new(&f);
        let live = liveness(&flat, rf);
        let mut across_call: BTreeSet<u32> = BTreeSet::new();
        for i in 0..flat.len() {
            if matches!(flat.inst(i), Inst::Call { .. }) {
                across_call.extend(live.live_out[i].iter().filter(|v| !temps.contains(v)));
            }
        }
        let intervals = intervals_from(&flat, &live, rf)?;
        let to_spill: Vec<u32> = if !across_call.is_empty() {
            across_call.into_iter().collect()
        } else {
            let ext = preserve_with(&f, &intervals, &temps);
            match linear_scan(&flat, &ext, rf, &temps) {
                Ok(assignment) => {
                    let function = rewrite_physical(&f, &assignment);
                    let spills = spills
                        .iter()
                        .map(|&(vreg, slot)| record_spill(&function, rf, frame, vreg, slot))
                        .collect();
                    return Ok(Allocated {
                        function,
                        allocation: Allocation { assignment, spills },
                        frame,
                        intervals: ext,
                    });
                }
                Err(Scan::Spill(vs)) => vs,
                Err(Scan::Stuck(slot)) => {
                    return Err(CompileError::RegisterPressure { pc: flat.pc(slot as usize / 2) })
                }
            }
        };
        for v in to_spill {
            let slot = frame.spill_slots;
            frame.spill_slots += 1;
            spills.push((v, slot));
            f = rewrite_spill(&f, rf, v, frame.slot_offset(slot), &mut next_vreg, &mut temps);
        }
    }
}

enum Scan {
    Spill(Vec<u32>),
    Stuck(u32),
}

fn linear_scan(
    flat: &FlatFunction<'_>,
    ivs: &[LiveInterval],
    rf: RegFile,
    temps: &HashSet<u32>,
) -> Result<BTreeMap<u32, u8>, Scan> {
    let mut reads: HashMap<u32, Vec<u32>> = HashMap::new();
    for i in 0..flat.len() {
        for r in flat.inst(i).uses(rf) {
            if let Reg::Virt(v) = r {
                reads.entry(v).or_default().push(2 * i as u32);
            }
        }
    }
    let next_read = |v: u32, from: u32| {
        reads.get(&v).and_then(|rs| rs.iter().copied().find(|&s| s >= from)).unwrap_or(u32::MAX)
    };

    let mut order: Vec<usize> = (0..ivs.len()).collect();
    order.sort_by_key(|&i| (ivs[i].lo, ivs[i].vreg));
    let mut free: BTreeSet<u8> = rf.allocatable().collect();
    let mut active: Vec<(usize, u8)> = Vec::new();
    let mut assignment = BTreeMap::new();
    let mut spilled = Vec::new();

    for cur in order {
        let lo = ivs[cur].lo;
        active.retain(|&(a, r)| {
            if ivs[a].top() < lo {
                free.insert(r);
                false
            } else {
                true
            }
        });
        if let Some(r) = free.pop_first() {
            assignment.insert(ivs[cur].vreg, r);
            active.push((cur, r));
            continue;
        }
        let key = |i: usize| (next_read(ivs[i].vreg, lo), ivs[i].top(), ivs[i].vreg);
        let victim = active
            .iter()
            .map(|&(a, _)| a)
            .chain(std::iter::once(cur))
            .filter(|&i| !temps.contains(&ivs[i].vreg))
            .max_by_key(|&i| key(i));
        match victim {
            None => return Err(Scan::Stuck(lo)),
            Some(v) if v == cur => spilled.push(ivs[cur].vreg),
            Some(v) => {
                let pos = active.iter().position(|&(a, _)| a == v).unwrap();
                let (_, r) = active.swap_remove(pos);
                assignment.remove(&ivs[v].vreg);
                spilled.push(ivs[v].vreg);
                assignment.insert(ivs[cur].vreg, r);
                active.push((cur, r));
            }
        }
    }
    if spilled.is_empty() {
        Ok(assignment)
    } else {
        spilled.sort_unstable();
        Err(Scan::Spill(spilled))
    }
}

/// Replaces `v` by a fresh temporary reloaded before each read and a fresh
/// temporary stored back after each write.
fn rewrite_spill(
    func: &Function,
    rf: RegFile,
    v: u32,
    offset: i64,
    next_vreg: &mut u32,
    temps: &mut HashSet<u32>,
) -> Function {
    let base = func.entry().insts.first().map_or(0, |i| i.pc);
    let mut out = func.clone();
    let target = Reg::Virt(v);
    let mut fresh = || {
        let t = *next_vreg;
        *next_vreg += 1;
        temps.insert(t);
        Reg::Virt(t)
    };
    for block in &mut out.blocks {
        let old = std::mem::take(&mut block.insts);
        for ins in old {
            let mut inst = ins.inst;
            if inst.uses(rf).contains(&target) {
                let t = fresh();
                block.insts.push(Inst::Ld { rd: t, base: rf.sp(), off: offset }.into());
                inst.map_uses(|r| if r == target { t } else { r });
            }
            let mut stored = None;
            if inst.defs(rf).contains(&target) {
                let t = fresh();
                inst.map_defs(|r| if r == target { t } else { r });
                stored = Some(t);
            }
            block.insts.push(Instruction::new(inst));
            if let Some(t) = stored {
                block.insts.push(Inst::St { rv: t, base: rf.sp(), off: offset }.into());
            }
        }
    }
    assign_pcs(&mut out, base);
    out
}

fn rewrite_physical(func: &Function, assignment: &BTreeMap<u32, u8>) -> Function {
    let mut out = func.clone();
    for block in &mut out.blocks {
        for ins in &mut block.insts {
            for r in ins.inst.regs_mut() {
                if let Reg::Virt(v) = *r {
                    *r = Reg::Phys(assignment[&v]);
                }
            }
        }
    }
    out
}

fn record_spill(func: &Function, rf: RegFile, frame: FrameLayout, vreg: u32, slot: u32) -> Spill {
    let offset = frame.slot_offset(slot);
    let sp = rf.sp();
    let mut spill = Spill { vreg, stack_slot: slot, offset, spill_store_pcs: vec![], reload_pcs: vec![] };
    for i in func.instructions() {
        match i.inst {
            Inst::St { base, off, .. } if base == sp && off == offset => spill.spill_store_pcs.push(i.pc),
            Inst::Ld { base, off, .. } if base == sp && off == offset => spill.reload_pcs.push(i.pc),
            _ => {}
        }
    }
    spill
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{linearize, parse_assembly};

    fn alloc(src: &str, k: u8) -> Allocated {
        let p = linearize(&parse_assembly(src).unwrap());
        allocate_registers(&p.functions[0], RegFile::new(k)).unwrap()
    }

    #[test]
    fn disjoint_intervals_no_spill() {
        let a = alloc("fn main {\ne:\n li v1, 8\n st v1 -> [v1+0]\n li v2, 16\n st v2 -> [v2+0]\n halt\n}", 16);
        assert!(a.allocation.spills.is_empty());
        assert_eq!(a.allocation.assignment.len(), 2);
    }

    #[test]
    fn one_over_capacity_spills_once() {
        // Five allocatable registers with K = 8; six values live at once.
        let mut src = String::from("fn main {\ne:\n li v6, 6\n");
        for v in 1..=5 {
            src += &format!(" li v{v}, {v}\n");
        }
        src += " add v7, v1, v2\n add v7, v7, v3\n add v7, v7, v4\n add v7, v7, v5\n add v7, v7, v6\n li v8, 64\n st v7 -> [v8+0]\n halt\n}";
        let a = alloc(&src, 8);
        assert_eq!(a.allocation.spills.len(), 1);
        assert_eq!(a.allocation.spills[0].vreg, 6);
        assert!(a.allocation.assignment.values().all(|&r| r < 5));
    }

    #[test]
    fn values_across_calls_are_spilled() {
        let src = "fn main {\ne:\n li v1, 8\n call f\n st v1 -> [v1+0]\n halt\n}\nfn f {\ne:\n ret\n}";
        let a = alloc(src, 16);
        assert_eq!(a.allocation.spills.len(), 1);
        assert!(a.frame.has_call);
        assert_eq!(a.allocation.spills[0].offset, 8);
    }
}
