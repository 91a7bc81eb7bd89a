use crate::isa::{layout::assign_pcs, Function, Inst, Instruction};

/// Places a `clwb` with the same address operands right after every store
/// that is not already followed by one.
pub fn insert_clwb(func: &Function) -> Function {
    let base = func.entry().insts.first().map_or(0, |i| i.pc);
    let mut out = func.clone();
    for block in &mut out.blocks {
        let old = std::mem::take(&mut block.insts);
        let mut it = old.into_iter().peekable();
        while let Some(ins) = it.next() {
            let pending = match &ins.inst {
                Inst::St { base, off, .. } => Some((*base, *off)),
                _ => None,
            };
            block.insts.push(ins);
            if let Some((base, off)) = pending {
                let paired = matches!(it.peek(), Some(n) if n.inst == Inst::Clwb { base, off });
                if !paired {
                    block.insts.push(Instruction::new(Inst::Clwb { base, off }));
                }
            }
        }
    }
    assign_pcs(&mut out, base);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_assembly;

    #[test]
    fn one_clwb_per_store_and_idempotent() {
        let src = "fn main {\ne:\n li r1, 8\n st r1 -> [r1+0]\n st r1 -> [r1+8]\n li r2, 1\n st r2 -> [r1-8]\n halt\n}";
        let f = parse_assembly(src).unwrap().functions.remove(0);
        let once = insert_clwb(&f);
        assert_eq!(once.instruction_count(), f.instruction_count() + 3);
        let insts: Vec<&Inst> = once.instructions().map(|i| &i.inst).collect();
        for (i, inst) in insts.iter().enumerate() {
            if let Inst::St { base, off, .. } = inst {
                assert_eq!(insts[i + 1], &Inst::Clwb { base: *base, off: *off });
            }
        }
        // The last store sits before the terminator and stays adjacent.
        assert_eq!(insts[insts.len() - 2], &Inst::Clwb { base: crate::isa::Reg::Phys(1), off: -8 });
        assert_eq!(insert_clwb(&once), once);
    }
}
