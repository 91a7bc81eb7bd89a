use crate::isa::{FlatFunction, Function, Inst, Reg, RegFile};

use super::CompileError;

/// Dense set of virtual register ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub(crate) struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    pub fn with_capacity(n: usize) -> Self {
        BitSet { words: vec![0; n.div_ceil(64)] }
    }

    pub fn insert(&mut self, v: u32) {
        let (w, b) = (v as usize / 64, v % 64);
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << b;
    }

    pub fn remove(&mut self, v: u32) {
        let (w, b) = (v as usize / 64, v % 64);
        if w < self.words.len() {
            self.words[w] &= !(1 << b);
        }
    }

    /// Returns whether anything was added.
    pub fn union_with(&mut self, other: &BitSet) -> bool {
        if other.words.len() > self.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        let mut changed = false;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            let n = *a | *b;
            changed |= n != *a;
            *a = n;
        }
        changed
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            (0..64).filter(move |b| w & (1u64 << b) != 0).map(move |b| (i * 64 + b) as u32)
        })
    }
}

fn vregs(regs: Vec<Reg>) -> impl Iterator<Item = u32> {
    regs.into_iter().filter_map(|r| r.vreg())
}

/// Per-instruction live-in/live-out sets over virtual registers, indexed by
/// flat position.
pub(crate) struct Liveness {
    pub live_in: Vec<BitSet>,
    pub live_out: Vec<BitSet>,
}

pub(crate) fn liveness(flat: &FlatFunction<'_>, rf: RegFile) -> Liveness {
    let n = flat.len();
    let cap = flat.func.max_vreg().map_or(0, |m| m as usize + 1);
    let uses: Vec<Vec<u32>> = (0..n).map(|i| vregs(flat.inst(i).uses(rf)).collect()).collect();
    let defs: Vec<Vec<u32>> = (0..n).map(|i| vregs(flat.inst(i).defs(rf)).collect()).collect();
    let mut live_in = vec![BitSet::with_capacity(cap); n];
    let mut live_out = vec![BitSet::with_capacity(cap); n];
    let mut changed = true;
    while changed {
        changed = false;
        for i in (0..n).rev() {
            let mut out = BitSet::with_capacity(cap);
            for &s in &flat.succs[i] {
                out.union_with(&live_in[s]);
            }
            let mut inn = out.clone();
            for &d in &defs[i] {
                inn.remove(d);
            }
            for &u in &uses[i] {
                inn.insert(u);
            }
            if inn != live_in[i] {
                live_in[i] = inn;
                changed = true;
            }
            live_out[i] = out;
        }
    }
    Liveness { live_in, live_out }
}

/// Live range of one virtual register in layout order, without holes.
///
/// Positions are PCs of the function as currently laid out. Internally each
/// instruction has two slots: operands are read in the first and results
/// written in the second, so a value may take over the register of an
/// operand that dies at the same instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveInterval {
    pub vreg: u32,
    pub start: u64,
    pub end: u64,
    pub is_store_operand: bool,
    pub is_branch_operand: bool,
    pub extended_end: Option<u64>,
    /// Slot range `[lo, hi]`; slot `2i` is the read slot of flat index `i`.
    pub(crate) lo: u32,
    pub(crate) hi: u32,
    /// Extended upper slot, set by store-register preservation.
    pub(crate) ext_hi: Option<u32>,
}

impl LiveInterval {
    /// Upper slot including any extension.
    pub(crate) fn top(&self) -> u32 {
        self.ext_hi.map_or(self.hi, |e| e.max(self.hi))
    }
}

/// Live intervals of every virtual register in a laid-out function, sorted
/// by register number.
pub fn compute_live_intervals(func: &Function, rf: RegFile) -> Result<Vec<LiveInterval>, CompileError> {
    let flat = FlatFunction::new(func);
    let live = liveness(&flat, rf);
    intervals_from(&flat, &live, rf)
}

pub(crate) fn intervals_from(
    flat: &FlatFunction<'_>,
    live: &Liveness,
    rf: RegFile,
) -> Result<Vec<LiveInterval>, CompileError> {
    if let Some(v) = live.live_in.first().and_then(|s| s.iter().next()) {
        let pc = (0..flat.len())
            .find(|&i| vregs(flat.inst(i).uses(rf)).any(|u| u == v))
            .map_or(0, |i| flat.pc(i));
        return Err(CompileError::UseBeforeDef { vreg: v, pc });
    }
    let cap = flat.func.max_vreg().map_or(0, |m| m as usize + 1);
    let mut span: Vec<Option<(u32, u32)>> = vec![None; cap];
    let mut store_op = vec![false; cap];
    let mut branch_op = vec![false; cap];
    let mut touch = |v: u32, s: u32| {
        let e = &mut span[v as usize];
        *e = Some(match *e {
            None => (s, s),
            Some((lo, hi)) => (lo.min(s), hi.max(s)),
        });
    };
    for i in 0..flat.len() {
        let (r, w) = (2 * i as u32, 2 * i as u32 + 1);
        for v in live.live_in[i].iter() {
            touch(v, r);
        }
        for v in live.live_out[i].iter() {
            touch(v, w);
        }
        let inst = flat.inst(i);
        for v in vregs(inst.uses(rf)) {
            touch(v, r);
        }
        for v in vregs(inst.defs(rf)) {
            touch(v, w);
        }
        match inst {
            Inst::St { rv, base, .. } => {
                for v in [rv, base].into_iter().filter_map(|r| r.vreg()) {
                    store_op[v as usize] = true;
                }
            }
            Inst::Br { ra, rb, .. } => {
                for v in [ra, rb].into_iter().filter_map(|r| r.vreg()) {
                    branch_op[v as usize] = true;
                }
            }
            _ => {}
        }
    }
    let pc_of = |slot: u32| flat.pc(slot as usize / 2);
    Ok(span
        .iter()
        .enumerate()
        .filter_map(|(v, s)| {
            s.map(|(lo, hi)| LiveInterval {
                vreg: v as u32,
                start: pc_of(lo),
                end: pc_of(hi),
                is_store_operand: store_op[v],
                is_branch_operand: branch_op[v],
                extended_end: None,
                lo,
                hi,
                ext_hi: None,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{linearize, parse_assembly};

    fn intervals(src: &str) -> Result<Vec<LiveInterval>, CompileError> {
        let p = linearize(&parse_assembly(src).unwrap());
        compute_live_intervals(&p.functions[0], RegFile::default())
    }

    #[test]
    fn def_to_last_use() {
        let iv = intervals("fn main {\ne:\n li v1, 1\n li v2, 2\n li v3, 3\n add v4, v1, v1\n halt\n}").unwrap();
        let v1 = iv.iter().find(|i| i.vreg == 1).unwrap();
        assert_eq!((v1.start, v1.end), (0, 12));
        let v4 = iv.iter().find(|i| i.vreg == 4).unwrap();
        assert_eq!((v4.start, v4.end), (12, 12));
    }

    #[test]
    fn flags_and_use_before_def() {
        let iv = intervals("fn main {\ne:\n li v1, 8\n st v1 -> [v1+0]\n bne v1, v1, e\nx:\n halt\n}").unwrap();
        assert!(iv[0].is_store_operand && iv[0].is_branch_operand);
        let err = intervals("fn main {\ne:\n add v2, v1, v1\n halt\n}").unwrap_err();
        assert_eq!(err, CompileError::UseBeforeDef { vreg: 1, pc: 0 });
    }

    #[test]
    fn loop_carried_value_spans_loop() {
        let src = "fn main {\ne:\n li v1, 0\n li v2, 1\nl:\n add v1, v1, v2\n blt v1, v2, l\nx:\n halt\n}";
        let iv = intervals(src).unwrap();
        let v2 = iv.iter().find(|i| i.vreg == 2).unwrap();
        // Layout: e(0,4) l(8,12) x(16).
        assert_eq!((v2.start, v2.end), (4, 12));
    }
}
