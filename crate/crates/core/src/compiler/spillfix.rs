use std::collections::{BTreeMap, HashSet};

use crate::isa::{BoundaryOrigin, FlatFunction, Function, Inst, Loc, Reg, RegFile};

use super::partition::{insert_boundaries, Partitioned, RegionBoundarySet};

/// For every store and conditional branch, finds on each path to the region
/// end the first instruction that writes one of its operand registers.
pub(crate) fn first_redefinitions(func: &Function, rf: RegFile) -> Vec<(usize, usize)> {
    let flat = FlatFunction::new(func);
    let mut out = Vec::new();
    for i in 0..flat.len() {
        let ops: Vec<Reg> = match flat.inst(i) {
            inst @ (Inst::St { .. } | Inst::Br { .. }) => inst.uses(rf),
            _ => continue,
        };
        let mut seen = HashSet::new();
        let mut stack = flat.succs[i].clone();
        while let Some(j) = stack.pop() {
            if !seen.insert(j) {
                continue;
            }
            let inst = flat.inst(j);
            if inst.is_boundary() {
                continue;
            }
            if inst.defs(rf).iter().any(|d| ops.contains(d)) {
                out.push((i, j));
                continue;
            }
            stack.extend(flat.succs[j].iter().copied());
        }
    }
    out
}

/// Post-allocation pass: cuts the region right before any instruction that
/// would overwrite an operand register of an earlier store (spill stores
/// included) or conditional branch in the same region.
pub fn preserve_spill_store_registers(func: &Function, rf: RegFile) -> Partitioned {
    let flat = FlatFunction::new(func);
    let cuts: BTreeMap<Loc, BoundaryOrigin> = first_redefinitions(func, rf)
        .into_iter()
        .map(|(_, j)| (flat.locs[j], BoundaryOrigin::SpillFix))
        .collect();
    let function = if cuts.is_empty() { func.clone() } else { insert_boundaries(func, &cuts) };
    let boundaries = RegionBoundarySet::from_function(&function);
    Partitioned { function, boundaries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{linearize, parse_assembly};

    fn fix(src: &str) -> Partitioned {
        let p = linearize(&parse_assembly(src).unwrap());
        preserve_spill_store_registers(&p.functions[0], RegFile::default())
    }

    #[test]
    fn no_redefinition_no_change() {
        let p = fix("fn main {\ne:\n rboundary\n li r1, 8\n st r1 -> [r13+8]\n li r2, 3\n halt\n}");
        assert_eq!(p.boundaries.count(BoundaryOrigin::SpillFix), 0);
    }

    #[test]
    fn two_redefinitions_one_cut() {
        let p = fix("fn main {\ne:\n rboundary\n li r1, 8\n st r1 -> [r13+8]\n shl r1, r1, r1\n li r1, 2\n halt\n}");
        assert_eq!(p.boundaries.count(BoundaryOrigin::SpillFix), 1);
        let insts: Vec<&Inst> = p.function.instructions().map(|i| &i.inst).collect();
        assert!(insts[3].is_boundary());
        assert!(matches!(insts[4], Inst::Alu { .. }));
    }
}
