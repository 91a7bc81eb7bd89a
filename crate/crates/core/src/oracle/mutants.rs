//! Deliberately broken variants of compiled programs. Each one breaks a
//! rule the integrity verifier must catch.

use crate::compiler::RegionBoundarySet;
use crate::isa::{linearize, AluOp, BoundaryOrigin, Inst, Instruction, Loc, Program, Reg};

#[derive(Debug, Clone)]
pub struct Mutant {
    pub name: &'static str,
    pub program: Program,
    pub boundaries: RegionBoundarySet,
    /// PC of the inserted instruction, or of the instruction that took the
    /// place of a removed one.
    pub mutation_pc: u64,
}

fn finish(name: &'static str, p: Program, func: usize, at: Loc) -> Mutant {
    let program = linearize(&p);
    let mutation_pc = program.functions[func].blocks[at.block].insts[at.idx].pc;
    let boundaries = RegionBoundarySet::from_program(&program);
    Mutant { name, program, boundaries, mutation_pc }
}

/// First instruction (in program layout) matching `pred`.
fn find(p: &Program, pred: impl Fn(&Program, usize, Loc) -> bool) -> Option<(usize, Loc)> {
    for fi in p.layout_order() {
        let f = &p.functions[fi];
        for bi in f.layout_order() {
            for idx in 0..f.blocks[bi].insts.len() {
                let loc = Loc { block: bi, idx };
                if pred(p, fi, loc) {
                    return Some((fi, loc));
                }
            }
        }
    }
    None
}

fn inst(p: &Program, fi: usize, loc: Loc) -> Option<&Inst> {
    p.functions[fi].blocks[loc.block].insts.get(loc.idx).map(|i| &i.inst)
}

fn insert(p: &mut Program, fi: usize, loc: Loc, i: Inst) {
    p.functions[fi].blocks[loc.block].insts.insert(loc.idx, Instruction::new(i));
}

fn store_with_clwb(p: &Program, fi: usize, loc: Loc) -> bool {
    matches!(inst(p, fi, loc), Some(Inst::St { .. }))
        && matches!(inst(p, fi, Loc { idx: loc.idx + 1, ..loc }), Some(Inst::Clwb { .. }))
}

/// Doubles the stored value register right after the store's `clwb`.
pub fn overwrite_store_value(p: &Program) -> Option<Mutant> {
    let (fi, loc) = find(p, store_with_clwb)?;
    let Some(&Inst::St { rv, .. }) = inst(p, fi, loc) else { unreachable!() };
    let mut m = p.clone();
    let at = Loc { idx: loc.idx + 2, ..loc };
    insert(&mut m, fi, at, Inst::Alu { op: AluOp::Add, rd: rv, ra: rv, rb: rv });
    Some(finish("overwrite-store-value", m, fi, at))
}

/// Clears the store's base register right after its `clwb`.
pub fn overwrite_store_base(p: &Program) -> Option<Mutant> {
    let (fi, loc) = find(p, store_with_clwb)?;
    let Some(&Inst::St { base, .. }) = inst(p, fi, loc) else { unreachable!() };
    let mut m = p.clone();
    let at = Loc { idx: loc.idx + 2, ..loc };
    insert(&mut m, fi, at, Inst::Li { rd: base, imm: 0 });
    Some(finish("overwrite-store-base", m, fi, at))
}

/// Writes a branch operand at the top of a successor, ahead of its boundary.
pub fn overwrite_branch_operand(p: &Program) -> Option<Mutant> {
    let (fi, loc) = find(p, |p, fi, loc| {
        matches!(inst(p, fi, loc), Some(Inst::Br { ra: Reg::Phys(_), .. }))
    })?;
    let f = &p.functions[fi];
    let Some(Inst::Br { ra, target, .. }) = inst(p, fi, loc).cloned() else { unreachable!() };
    let tb = f.block_index(&target)?;
    let mut m = p.clone();
    let at = Loc { block: tb, idx: 0 };
    insert(&mut m, fi, at, Inst::Li { rd: ra, imm: 0 });
    Some(finish("overwrite-branch-operand", m, fi, at))
}

/// Deletes the first boundary placed with the given origin.
pub fn remove_boundary(p: &Program, origin: BoundaryOrigin) -> Option<Mutant> {
    let (fi, loc) = find(p, |p, fi, loc| matches!(inst(p, fi, loc), Some(Inst::Boundary(Some(o))) if *o == origin))?;
    let mut m = p.clone();
    m.functions[fi].blocks[loc.block].insts.remove(loc.idx);
    let name = match origin {
        BoundaryOrigin::SpillFix => "remove-spillfix",
        BoundaryOrigin::Pressure => "remove-pressure-cut",
        _ => "remove-boundary",
    };
    Some(finish(name, m, fi, loc))
}

/// Deletes the first `clwb`.
pub fn remove_clwb(p: &Program) -> Option<Mutant> {
    let (fi, loc) = find(p, |p, fi, loc| matches!(inst(p, fi, loc), Some(Inst::Clwb { .. })))?;
    let mut m = p.clone();
    m.functions[fi].blocks[loc.block].insts.remove(loc.idx);
    Some(finish("remove-clwb", m, fi, Loc { idx: loc.idx - 1, ..loc }))
}

/// Points the first `clwb` at the next word.
pub fn shift_clwb(p: &Program) -> Option<Mutant> {
    let (fi, loc) = find(p, |p, fi, loc| matches!(inst(p, fi, loc), Some(Inst::Clwb { .. })))?;
    let mut m = p.clone();
    if let Inst::Clwb { off, .. } = &mut m.functions[fi].blocks[loc.block].insts[loc.idx].inst {
        *off += 8;
    }
    Some(finish("shift-clwb", m, fi, loc))
}

/// Every mutant that applies to `p`.
pub fn all_mutants(p: &Program) -> Vec<Mutant> {
    [
        overwrite_store_value(p),
        overwrite_store_base(p),
        overwrite_branch_operand(p),
        remove_boundary(p, BoundaryOrigin::SpillFix),
        remove_clwb(p),
        shift_clwb(p),
    ]
    .into_iter()
    .flatten()
    .collect()
}
