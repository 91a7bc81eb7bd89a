use crate::isa::{layout::assign_pcs, AluOp, Function, Inst, Instruction, Reg, RegFile};

use super::regalloc::FrameLayout;

/// Scratch register used to materialize the frame size. It is the highest
/// allocatable register; nothing is live across the prologue or epilogue.
pub(crate) fn frame_scratch(rf: RegFile) -> Reg {
    Reg::Phys(rf.k - 4)
}

/// Inserts the stack-pointer adjustment after the entry boundary and before
/// every `ret`, and saves/restores the link register when the function calls.
pub fn lower_frame(func: &Function, frame: FrameLayout, rf: RegFile) -> Function {
    let size = frame.size();
    if size == 0 {
        return func.clone();
    }
    let base = func.entry().insts.first().map_or(0, |i| i.pc);
    let (sp, lr, t) = (rf.sp(), rf.lr(), frame_scratch(rf));
    let mut out = func.clone();

    let mut prologue: Vec<Instruction> = vec![
        Inst::Li { rd: t, imm: size }.into(),
        Inst::Alu { op: AluOp::Sub, rd: sp, ra: sp, rb: t }.into(),
    ];
    if frame.has_call {
        prologue.push(Inst::St { rv: lr, base: sp, off: 0 }.into());
    }
    let entry = &mut out.blocks[0];
    let at = usize::from(entry.insts.first().is_some_and(|i| i.inst.is_boundary()));
    entry.insts.splice(at..at, prologue);

    for block in &mut out.blocks {
        if matches!(block.terminator(), Some(Inst::Ret)) {
            let mut epilogue: Vec<Instruction> = Vec::new();
            if frame.has_call {
                epilogue.push(Inst::Ld { rd: lr, base: sp, off: 0 }.into());
            }
            epilogue.push(Inst::Li { rd: t, imm: size }.into());
            epilogue.push(Inst::Alu { op: AluOp::Add, rd: sp, ra: sp, rb: t }.into());
            let at = block.insts.len() - 1;
            block.insts.splice(at..at, epilogue);
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
    fn prologue_and_epilogue() {
        let p = parse_assembly("fn f {\ne:\n rboundary\n call g\n ret\n}\nfn g {\ne:\n ret\n}\nentry f").unwrap();
        let f = lower_frame(&p.functions[0], FrameLayout { has_call: true, spill_slots: 1 }, RegFile::default());
        let text: Vec<String> = f.instructions().map(|i| i.inst.to_string()).collect();
        assert_eq!(
            text,
            [
                "rboundary",
                "li r12, 16",
                "sub r13, r13, r12",
                "st r14 -> [r13+0]",
                "call g",
                "ld [r13+0] -> r14",
                "li r12, 16",
                "add r13, r13, r12",
                "ret"
            ]
        );
    }
}
