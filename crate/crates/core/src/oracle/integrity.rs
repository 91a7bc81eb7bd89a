use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use crate::compiler::RegionBoundarySet;
use crate::isa::{FlatFunction, Function, Inst, Program, Reg, RegFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    /// A register read by a store is written before the region ends.
    StoreOperandOverwritten { store_pc: u64, reg: u8 },
    /// A register read by a branch is written before the region ends.
    BranchOperandOverwritten { branch_pc: u64, reg: u8 },
    /// A store is not immediately followed by a `clwb` of its address.
    MissingClwb { store_pc: u64 },
    /// A `clwb` that does not follow a store to the same address.
    StrayClwb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IntegrityViolation {
    /// Where the offending write (or missing/stray write-back) is.
    pub pc: u64,
    pub kind: ViolationKind,
}

impl fmt::Display for IntegrityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::StoreOperandOverwritten { store_pc, reg } => {
                write!(f, "pc {:#x}: r{reg} overwritten while the store at {store_pc:#x} may need replay", self.pc)
            }
            ViolationKind::BranchOperandOverwritten { branch_pc, reg } => {
                write!(f, "pc {:#x}: r{reg} of the branch at {branch_pc:#x} overwritten in its region", self.pc)
            }
            ViolationKind::MissingClwb { store_pc } => write!(f, "pc {store_pc:#x}: store without clwb"),
            ViolationKind::StrayClwb => write!(f, "pc {:#x}: clwb does not follow its store", self.pc),
        }
    }
}

fn phys(r: Reg) -> Option<u8> {
    match r {
        Reg::Phys(p) => Some(p),
        Reg::Virt(_) => None,
    }
}

/// Instructions after which the next one executed belongs to another region.
fn leaves_region(inst: &Inst) -> bool {
    matches!(inst, Inst::Call { .. } | Inst::Ret | Inst::Halt)
}

/// Walks every path from the successors of `from` up to the next region
/// boundary and reports each write to one of `regs`.
fn overwrites(
    flat: &FlatFunction<'_>,
    boundaries: &RegionBoundarySet,
    rf: RegFile,
    from: usize,
    regs: &[u8],
) -> Vec<(usize, u8)> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut stack: Vec<usize> = flat.succs[from].clone();
    if leaves_region(flat.inst(from)) {
        stack.clear();
    }
    while let Some(i) = stack.pop() {
        if !seen.insert(i) {
            continue;
        }
        let inst = flat.inst(i);
        if inst.is_boundary() || boundaries.contains(flat.pc(i)) {
            continue;
        }
        for d in inst.defs(rf).into_iter().filter_map(phys) {
            if regs.contains(&d) {
                out.push((i, d));
            }
        }
        if !leaves_region(inst) {
            stack.extend(flat.succs[i].iter().copied());
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn check_function(func: &Function, boundaries: &RegionBoundarySet, rf: RegFile, out: &mut Vec<IntegrityViolation>) {
    let flat = FlatFunction::new(func);
    for i in 0..flat.len() {
        let pc = flat.pc(i);
        match flat.inst(i) {
            Inst::St { rv, base, off } => {
                let regs: Vec<u8> = [*rv, *base].into_iter().filter_map(phys).collect();
                for (j, reg) in overwrites(&flat, boundaries, rf, i, &regs) {
                    out.push(IntegrityViolation {
                        pc: flat.pc(j),
                        kind: ViolationKind::StoreOperandOverwritten { store_pc: pc, reg },
                    });
                }
                let paired = flat.locs[i].idx + 1 < func.blocks[flat.locs[i].block].insts.len()
                    && matches!(flat.inst(i + 1), Inst::Clwb { base: b, off: o } if b == base && o == off);
                if !paired {
                    out.push(IntegrityViolation { pc, kind: ViolationKind::MissingClwb { store_pc: pc } });
                }
            }
            Inst::Br { ra, rb, .. } => {
                let regs: Vec<u8> = [*ra, *rb].into_iter().filter_map(phys).collect();
                for (j, reg) in overwrites(&flat, boundaries, rf, i, &regs) {
                    out.push(IntegrityViolation {
                        pc: flat.pc(j),
                        kind: ViolationKind::BranchOperandOverwritten { branch_pc: pc, reg },
                    });
                }
            }
            Inst::Clwb { base, off } => {
                let paired = flat.locs[i].idx > 0
                    && matches!(flat.inst(i - 1), Inst::St { base: b, off: o, .. } if b == base && o == off);
                if !paired {
                    out.push(IntegrityViolation { pc, kind: ViolationKind::StrayClwb });
                }
            }
            _ => {}
        }
    }
}

/// Checks that no store or branch operand register is written between the
/// instruction and the end of its region, on any path, and that every store
/// is paired with a `clwb`. Region ends are boundary instructions, PCs in
/// `boundaries`, and transfers to another function.
pub fn verify_store_integrity(program: &Program, boundaries: &RegionBoundarySet, rf: RegFile) -> Vec<IntegrityViolation> {
    let mut out = Vec::new();
    for f in &program.functions {
        check_function(f, boundaries, rf, &mut out);
    }
    out.sort_by_key(|v| v.pc);
    out
}
