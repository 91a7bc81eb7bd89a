use std::collections::{BTreeMap, HashSet};

use crate::isa::{
    layout::assign_pcs, BoundaryOrigin, FlatFunction, Function, Inst, Instruction, Loc, Program,
};

use super::liveness::{BitSet, LiveInterval};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionOptions {
    /// Cut at every control-flow merge and branch successor so that each
    /// region is a single layout-contiguous straight-line run.
    pub cut_at_merges: bool,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions { cut_at_merges: true }
    }
}

/// Region boundary PCs with the phase that placed each one. Boundaries
/// written by hand in the source carry no origin.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegionBoundarySet {
    pub boundaries: BTreeMap<u64, Option<BoundaryOrigin>>,
}

impl RegionBoundarySet {
    pub fn from_function(func: &Function) -> Self {
        let mut s = RegionBoundarySet::default();
        s.scan(func);
        s
    }

    pub fn from_program(program: &Program) -> Self {
        let mut s = RegionBoundarySet::default();
        for f in &program.functions {
            s.scan(f);
        }
        s
    }

    fn scan(&mut self, func: &Function) {
        for i in func.instructions() {
            if let Inst::Boundary(o) = i.inst {
                self.boundaries.insert(i.pc, o);
            }
        }
    }

    pub fn pcs(&self) -> impl Iterator<Item = u64> + '_ {
        self.boundaries.keys().copied()
    }

    pub fn contains(&self, pc: u64) -> bool {
        self.boundaries.contains_key(&pc)
    }

    pub fn origin(&self, pc: u64) -> Option<BoundaryOrigin> {
        self.boundaries.get(&pc).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    pub fn count(&self, origin: BoundaryOrigin) -> usize {
        self.boundaries.values().filter(|o| **o == Some(origin)).count()
    }
}

/// A function with boundary instructions inserted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partitioned {
    pub function: Function,
    pub boundaries: RegionBoundarySet,
}

/// Inserts `rboundary` instructions before the given positions (`idx` may
/// equal the block length to append) and re-assigns PCs from the function's
/// current base.
pub(crate) fn insert_boundaries(func: &Function, at: &BTreeMap<Loc, BoundaryOrigin>) -> Function {
    let base = func.entry().insts.first().map_or(0, |i| i.pc);
    let mut out = func.clone();
    for (bi, block) in out.blocks.iter_mut().enumerate() {
        let old = std::mem::take(&mut block.insts);
        let n = old.len();
        for (idx, ins) in old.into_iter().enumerate() {
            if let Some(&o) = at.get(&Loc { block: bi, idx }) {
                block.insts.push(Instruction::new(Inst::Boundary(Some(o))));
            }
            block.insts.push(ins);
        }
        if let Some(&o) = at.get(&Loc { block: bi, idx: n }) {
            block.insts.push(Instruction::new(Inst::Boundary(Some(o))));
        }
    }
    assign_pcs(&mut out, base);
    out
}

/// Block-level predecessor lists.
pub(crate) fn block_preds(func: &Function) -> Vec<Vec<usize>> {
    let mut preds = vec![Vec::new(); func.blocks.len()];
    for (bi, b) in func.blocks.iter().enumerate() {
        for l in b.successors() {
            if let Some(s) = func.block_index(&l) {
                if !preds[s].contains(&bi) {
                    preds[s].push(bi);
                }
            }
        }
    }
    preds
}

/// Places region boundaries in a laid-out function.
///
/// Initial cuts go at function entry and after every call; loop headers
/// reached by a back-edge are always cut. With `cut_at_merges`, branch
/// successors, merge points and blocks that do not continue their only
/// predecessor in layout are cut as well. A reverse-post-order walk then
/// counts overlapping intervals, keeping store and branch operands alive
/// until the next cut, and cuts before the first instruction at which the
/// count would exceed `threshold`.
pub fn partition_regions(
    func: &Function,
    intervals: &[LiveInterval],
    threshold: usize,
    opts: PartitionOptions,
) -> Partitioned {
    let flat = FlatFunction::new(func);
    let nblocks = func.blocks.len();
    let is_boundary_at = |loc: Loc| {
        func.blocks[loc.block].insts.get(loc.idx).is_some_and(|i| i.inst.is_boundary())
    };
    let mut cuts: BTreeMap<Loc, BoundaryOrigin> = BTreeMap::new();
    let plan = |cuts: &mut BTreeMap<Loc, BoundaryOrigin>, loc: Loc, o: BoundaryOrigin| {
        if !is_boundary_at(loc) {
            cuts.entry(loc).or_insert(o);
        }
    };

    plan(&mut cuts, Loc { block: 0, idx: 0 }, BoundaryOrigin::InitialCall);
    for (bi, b) in func.blocks.iter().enumerate() {
        for (idx, ins) in b.insts.iter().enumerate() {
            if matches!(ins.inst, Inst::Call { .. }) {
                plan(&mut cuts, Loc { block: bi, idx: idx + 1 }, BoundaryOrigin::InitialCall);
            }
        }
    }
    for (_, to) in flat.back_edges() {
        plan(&mut cuts, Loc { block: to, idx: 0 }, BoundaryOrigin::LoopBackEdge);
    }
    let preds = block_preds(func);
    if opts.cut_at_merges {
        for b in &func.blocks {
            if matches!(b.terminator(), Some(Inst::Br { .. })) {
                for l in b.successors() {
                    if let Some(s) = func.block_index(&l) {
                        plan(&mut cuts, Loc { block: s, idx: 0 }, BoundaryOrigin::InitialBranchEnd);
                    }
                }
            }
        }
        for bi in 1..nblocks {
            let contiguous = match preds[bi].as_slice() {
                [p] => {
                    let last = flat.block_start[*p] + func.blocks[*p].insts.len() - 1;
                    last + 1 == flat.block_start[bi]
                }
                _ => false,
            };
            if !contiguous {
                plan(&mut cuts, Loc { block: bi, idx: 0 }, BoundaryOrigin::MergeCut);
            }
        }
    }

    // Interval membership per slot.
    let cap = intervals.iter().map(|i| i.vreg as usize + 1).max().unwrap_or(0);
    let covering = |slot: u32| {
        let mut s = BitSet::with_capacity(cap);
        for iv in intervals.iter().filter(|iv| iv.lo <= slot && slot <= iv.hi) {
            s.insert(iv.vreg);
        }
        s
    };
    let at_inst: Vec<(BitSet, BitSet)> =
        (0..flat.len()).map(|i| (covering(2 * i as u32), covering(2 * i as u32 + 1))).collect();
    let pressure = |i: usize, carried: &BitSet| {
        let (mut r, mut w) = at_inst[i].clone();
        r.union_with(carried);
        w.union_with(carried);
        r.len().max(w.len())
    };

    let back: HashSet<(usize, usize)> = flat.back_edges().into_iter().collect();
    let mut carried_out: Vec<Option<BitSet>> = vec![None; nblocks];
    let empty = BitSet::default();
    for b in flat.block_rpo() {
        let mut carried = BitSet::with_capacity(cap);
        for &p in &preds[b] {
            if back.contains(&(p, b)) {
                continue;
            }
            if let Some(c) = &carried_out[p] {
                carried.union_with(c);
            }
        }
        let len = func.blocks[b].insts.len();
        for idx in 0..len {
            let loc = Loc { block: b, idx };
            let i = flat.block_start[b] + idx;
            let inst = flat.inst(i);
            if cuts.contains_key(&loc) || inst.is_boundary() {
                carried.clear();
            }
            if inst.is_boundary() {
                continue;
            }
            if !carried.is_empty() && pressure(i, &carried) > threshold && pressure(i, &empty) <= threshold {
                cuts.insert(loc, BoundaryOrigin::Pressure);
                carried.clear();
            }
            match inst {
                Inst::St { rv, base, .. } => [rv, base].iter().filter_map(|r| r.vreg()).for_each(|v| carried.insert(v)),
                Inst::Br { ra, rb, .. } => [ra, rb].iter().filter_map(|r| r.vreg()).for_each(|v| carried.insert(v)),
                _ => {}
            }
        }
        if cuts.contains_key(&Loc { block: b, idx: len }) {
            carried.clear();
        }
        carried_out[b] = Some(carried);
    }

    let function = insert_boundaries(func, &cuts);
    let boundaries = RegionBoundarySet::from_function(&function);
    Partitioned { function, boundaries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compute_live_intervals;
    use crate::isa::{linearize, parse_assembly, RegFile};

    fn part(src: &str, threshold: usize, cut_at_merges: bool) -> Partitioned {
        let p = linearize(&parse_assembly(src).unwrap());
        let f = &p.functions[0];
        let iv = compute_live_intervals(f, RegFile::default()).unwrap();
        partition_regions(f, &iv, threshold, PartitionOptions { cut_at_merges })
    }

    #[test]
    fn straight_line_only_entry() {
        let src = "fn main {\ne:\n li v1, 8\n li v2, 1\n add v3, v2, v2\n st v3 -> [v1+0]\n halt\n}";
        let p = part(src, 16, true);
        assert_eq!(p.boundaries.pcs().collect::<Vec<_>>(), vec![0]);
        assert_eq!(p.boundaries.origin(0), Some(BoundaryOrigin::InitialCall));
    }

    #[test]
    fn loop_header_is_cut() {
        let src = "fn main {\ne:\n li v1, 0\n li v2, 8\nl:\n st v1 -> [v2+0]\n add v1, v1, v2\n blt v1, v2, l\nx:\n halt\n}";
        let p = part(src, 16, true);
        assert_eq!(p.boundaries.count(BoundaryOrigin::LoopBackEdge), 1);
        let l = p.function.block("l").unwrap();
        assert!(l.insts[0].inst.is_boundary());
        // Exit block follows a conditional branch.
        assert!(p.function.block("x").unwrap().insts[0].inst.is_boundary());
    }

    #[test]
    fn call_followed_by_cut() {
        let src = "fn main {\ne:\n call f\n halt\n}\nfn f {\ne:\n ret\n}";
        let p = linearize(&parse_assembly(src).unwrap());
        let f = &p.functions[0];
        let part = partition_regions(f, &[], 16, PartitionOptions::default());
        let insts: Vec<&Inst> = part.function.instructions().map(|i| &i.inst).collect();
        assert!(insts[0].is_boundary() && insts[2].is_boundary());
        assert_eq!(part.boundaries.len(), 2);
    }

    #[test]
    fn pressure_cut_at_low_threshold() {
        let src = "fn main {\ne:\n li v1, 8\n st v1 -> [v1+0]\n li v2, 1\n li v3, 2\n add v4, v2, v3\n st v4 -> [v2+0]\n halt\n}";
        let p = part(src, 2, true);
        assert_eq!(p.boundaries.count(BoundaryOrigin::Pressure), 1);
        // The carried store operand v1 plus v2 and v3 make three.
        let e = &p.function.blocks[0];
        assert!(e.insts[4].inst.is_boundary());
        assert!(matches!(e.insts[5].inst, Inst::Li { imm: 2, .. }));
    }
}
