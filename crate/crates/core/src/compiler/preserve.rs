use std::collections::HashSet;

use crate::isa::{FlatFunction, Function, Inst};

use super::liveness::LiveInterval;
use super::partition::RegionBoundarySet;

/// Slots at which walks from flat index `from` reach the end of the region:
/// the read slot of the next boundary, or of a `ret`/`halt`.
pub(crate) fn region_ends(flat: &FlatFunction<'_>, from: usize) -> Vec<u32> {
    let mut ends = Vec::new();
    let mut seen = HashSet::new();
    let mut stack: Vec<usize> = flat.succs[from].clone();
    if flat.succs[from].is_empty() {
        ends.push(2 * from as u32);
    }
    while let Some(j) = stack.pop() {
        if !seen.insert(j) {
            continue;
        }
        let inst = flat.inst(j);
        if inst.is_boundary() || flat.succs[j].is_empty() {
            ends.push(2 * j as u32);
            continue;
        }
        stack.extend(flat.succs[j].iter().copied());
    }
    ends
}

/// Extends every store- and branch-operand interval from each such use to
/// the end of the enclosing region on every path. `skip` lists registers
/// left untouched (spill temporaries, which the post-allocation pass keeps
/// safe instead).
pub(crate) fn preserve_with(
    func: &Function,
    intervals: &[LiveInterval],
    skip: &HashSet<u32>,
) -> Vec<LiveInterval> {
    let flat = FlatFunction::new(func);
    let mut out = intervals.to_vec();
    let index: std::collections::HashMap<u32, usize> =
        out.iter().enumerate().map(|(i, iv)| (iv.vreg, i)).collect();
    for i in 0..flat.len() {
        let ops: Vec<u32> = match flat.inst(i) {
            Inst::St { rv, base, .. } => [rv, base].iter().filter_map(|r| r.vreg()).collect(),
            Inst::Br { ra, rb, .. } => [ra, rb].iter().filter_map(|r| r.vreg()).collect(),
            _ => continue,
        };
        let ops: Vec<u32> = ops.into_iter().filter(|v| !skip.contains(v)).collect();
        if ops.is_empty() {
            continue;
        }
        let Some(&end) = region_ends(&flat, i).iter().max() else { continue };
        for v in ops {
            let iv = &mut out[index[&v]];
            let e = iv.ext_hi.map_or(end, |x| x.max(end)).max(iv.hi);
            iv.ext_hi = Some(e);
        }
    }
    for iv in &mut out {
        if let Some(e) = iv.ext_hi {
            iv.extended_end = Some(flat.pc(e as usize / 2));
        }
    }
    out
}

/// Extends store and branch operand intervals to their region ends.
pub fn preserve_store_registers(
    func: &Function,
    boundaries: &RegionBoundarySet,
    intervals: &[LiveInterval],
) -> Vec<LiveInterval> {
    debug_assert!(func.instructions().filter(|i| i.inst.is_boundary()).all(|i| boundaries.contains(i.pc)));
    preserve_with(func, intervals, &HashSet::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compute_live_intervals, partition_regions, PartitionOptions};
    use crate::isa::{linearize, parse_assembly, RegFile};

    #[test]
    fn last_use_before_boundary_has_zero_extension() {
        let src = "fn main {\ne:\n li v1, 8\n st v1 -> [v1+0]\n rboundary\n halt\n}";
        let p = linearize(&parse_assembly(src).unwrap());
        let f = &p.functions[0];
        let rf = RegFile::default();
        let iv = compute_live_intervals(f, rf).unwrap();
        let part = partition_regions(f, &iv, 16, PartitionOptions::default());
        let iv = compute_live_intervals(&part.function, rf).unwrap();
        let ext = preserve_store_registers(&part.function, &part.boundaries, &iv);
        // Entry boundary at 0, li at 4, st at 8, boundary at 12.
        assert_eq!(ext[0].end, 8);
        assert_eq!(ext[0].extended_end, Some(12));
    }

    #[test]
    fn shared_address_register_covers_later_store() {
        let src = "fn main {\ne:\n li v1, 8\n li v2, 1\n st v2 -> [v1+0]\n li v3, 2\n st v3 -> [v1+8]\n li v4, 3\n halt\n}";
        let p = linearize(&parse_assembly(src).unwrap());
        let f = &p.functions[0];
        let rf = RegFile::default();
        let part = partition_regions(f, &compute_live_intervals(f, rf).unwrap(), 16, PartitionOptions::default());
        let iv = compute_live_intervals(&part.function, rf).unwrap();
        let ext = preserve_store_registers(&part.function, &part.boundaries, &iv);
        let halt_pc = part.function.instructions().last().unwrap().pc;
        let get = |v: u32| ext.iter().find(|i| i.vreg == v).unwrap();
        for v in [1, 2, 3] {
            assert_eq!(get(v).extended_end, Some(halt_pc), "v{v}");
        }
        assert_eq!(get(4).extended_end, None);
    }
}
