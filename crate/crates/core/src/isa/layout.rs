use super::{Function, Inst, Program, INST_BYTES};

/// Assigns program-wide PCs. Functions are placed entry-first then by name;
/// blocks within a function entry-first then by label. The result depends
/// only on the program's content, never on declaration order of blocks.
pub fn linearize(program: &Program) -> Program {
    let mut out = program.clone();
    let mut pc = 0;
    for fi in program.layout_order() {
        pc = assign_pcs(&mut out.functions[fi], pc);
    }
    out
}

/// Assigns PCs to one function starting at `base`; returns the next free PC.
pub(crate) fn assign_pcs(func: &mut Function, base: u64) -> u64 {
    let mut pc = base;
    for bi in func.layout_order() {
        for inst in &mut func.blocks[bi].insts {
            inst.pc = pc;
            pc += INST_BYTES;
        }
    }
    pc
}

/// Position of an instruction inside a [`Function`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Loc {
    pub block: usize,
    pub idx: usize,
}

/// A function flattened into layout order with intra-procedural successor
/// edges. Calls fall through to the next instruction; `ret` and `halt` have
/// no successors.
#[derive(Debug, Clone)]
pub struct FlatFunction<'a> {
    pub func: &'a Function,
    pub locs: Vec<Loc>,
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    /// Flat index of each block's first instruction, by block index.
    pub block_start: Vec<usize>,
}

impl<'a> FlatFunction<'a> {
    /// Requires every block to be non-empty and every label to resolve.
    pub fn new(func: &'a Function) -> Self {
        let order = func.layout_order();
        let mut locs = Vec::new();
        let mut block_start = vec![usize::MAX; func.blocks.len()];
        for &bi in &order {
            block_start[bi] = locs.len();
            for idx in 0..func.blocks[bi].insts.len() {
                locs.push(Loc { block: bi, idx });
            }
        }
        let mut succs = vec![Vec::new(); locs.len()];
        for (i, loc) in locs.iter().enumerate() {
            let block = &func.blocks[loc.block];
            if loc.idx + 1 < block.insts.len() {
                succs[i].push(i + 1);
            } else {
                for label in block.successors() {
                    if let Some(bi) = func.block_index(&label) {
                        let s = block_start[bi];
                        if s != usize::MAX && !succs[i].contains(&s) {
                            succs[i].push(s);
                        }
                    }
                }
            }
        }
        let mut preds = vec![Vec::new(); locs.len()];
        for (i, ss) in succs.iter().enumerate() {
            for &s in ss {
                preds[s].push(i);
            }
        }
        FlatFunction { func, locs, succs, preds, block_start }
    }

    pub fn len(&self) -> usize {
        self.locs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locs.is_empty()
    }

    pub fn inst(&self, i: usize) -> &'a Inst {
        let l = self.locs[i];
        &self.func.blocks[l.block].insts[l.idx].inst
    }

    pub fn pc(&self, i: usize) -> u64 {
        let l = self.locs[i];
        self.func.blocks[l.block].insts[l.idx].pc
    }

    pub fn index_of_pc(&self, pc: u64) -> Option<usize> {
        (0..self.len()).find(|&i| self.pc(i) == pc)
    }

    pub fn is_block_start(&self, i: usize) -> bool {
        self.locs[i].idx == 0
    }

    /// Reverse post-order of block indices from the entry block.
    pub fn block_rpo(&self) -> Vec<usize> {
        let n = self.func.blocks.len();
        let mut visited = vec![false; n];
        let mut post = Vec::new();
        // Iterative DFS; successors visited in label order for determinism.
        let mut stack: Vec<(usize, Vec<usize>)> = Vec::new();
        if n > 0 {
            visited[0] = true;
            stack.push((0, self.block_succs(0)));
        }
        while let Some((b, pending)) = stack.last_mut() {
            if let Some(s) = pending.pop() {
                if !visited[s] {
                    visited[s] = true;
                    let ss = self.block_succs(s);
                    stack.push((s, ss));
                }
            } else {
                post.push(*b);
                stack.pop();
            }
        }
        post.reverse();
        post
    }

    /// Successor block indices, reversed so that popping yields label order.
    fn block_succs(&self, b: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self.func.blocks[b]
            .successors()
            .iter()
            .filter_map(|l| self.func.block_index(l))
            .collect();
        s.sort_by(|&a, &c| self.func.blocks[c].label.cmp(&self.func.blocks[a].label));
        s
    }

    /// Edges `(from_block, to_block)` that close a cycle in the DFS from the
    /// entry (targets are loop headers).
    pub fn back_edges(&self) -> Vec<(usize, usize)> {
        let rpo = self.block_rpo();
        let mut rank = vec![usize::MAX; self.func.blocks.len()];
        for (r, &b) in rpo.iter().enumerate() {
            rank[b] = r;
        }
        let mut out = Vec::new();
        for &b in &rpo {
            for s in self.block_succs(b) {
                if rank[s] <= rank[b] {
                    out.push((b, s));
                }
            }
        }
        out.sort();
        out
    }

    /// Number of CFG predecessors of each block (unreachable preds included).
    pub fn block_pred_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.func.blocks.len()];
        for b in &self.func.blocks {
            for l in b.successors() {
                if let Some(i) = self.func.block_index(&l) {
                    counts[i] += 1;
                }
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_assembly;

    fn pcs(p: &Program) -> Vec<(String, Vec<u64>)> {
        let mut v: Vec<(String, Vec<u64>)> = p
            .functions
            .iter()
            .flat_map(|f| f.blocks.iter().map(|b| (b.label.clone(), b.insts.iter().map(|i| i.pc).collect())))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn two_instructions() {
        let p = linearize(&parse_assembly("fn main { entry: li r1, 5 \n halt }").unwrap());
        let got: Vec<u64> = p.functions[0].instructions().map(|i| i.pc).collect();
        assert_eq!(got, vec![0, 4]);
    }

    const DIAMOND: &str = "fn main {\nA:\n li v1, 1\n beq v1, v1, C\nB:\n jmp D\nC:\n jmp D\nD:\n halt\n}";

    #[test]
    fn diamond_layout() {
        let p = linearize(&parse_assembly(DIAMOND).unwrap());
        let f = &p.functions[0];
        let order: Vec<&str> = f.layout_order().into_iter().map(|b| f.blocks[b].label.as_str()).collect();
        assert_eq!(order, ["A", "B", "C", "D"]);
        assert_eq!(f.block("D").unwrap().insts[0].pc, 16);
    }

    #[test]
    fn block_permutation_keeps_pcs() {
        let permuted = "fn main {\nA:\n li v1, 1\n beq v1, v1, C\nD:\n halt\nC:\n jmp D\nB:\n jmp D\n}";
        let canonical = "fn main {\nA:\n li v1, 1\n beq v1, v1, C\nB:\n jmp D\nC:\n jmp D\nD:\n halt\n}";
        let a = linearize(&parse_assembly(permuted).unwrap());
        let b = linearize(&parse_assembly(canonical).unwrap());
        assert_eq!(pcs(&a), pcs(&b));
    }

    #[test]
    fn rpo_and_back_edges() {
        let src = "fn main {\nentry:\n li v1, 0\nloop:\n bne v1, v1, loop\nexit:\n halt\n}";
        let p = linearize(&parse_assembly(src).unwrap());
        let flat = FlatFunction::new(&p.functions[0]);
        assert_eq!(flat.block_rpo(), vec![0, 1, 2]);
        assert_eq!(flat.back_edges(), vec![(1, 1)]);
        let l = flat.block_start[1];
        assert_eq!(flat.succs[l], vec![l, flat.block_start[2]]);
    }
}
