use std::collections::HashSet;
use std::fmt;

use super::{Inst, Program, Reg, RegFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    TerminatorNotLast,
    UnresolvedLabel,
    UnknownCallee,
    EmptyBlock,
    FallsOffEnd,
    ClwbMismatch,
    RegisterOutOfRange,
    PcOrder,
    MissingEntry,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::TerminatorNotLast => "terminator-not-last",
            Rule::UnresolvedLabel => "unresolved-label",
            Rule::UnknownCallee => "unknown-callee",
            Rule::EmptyBlock => "empty-block",
            Rule::FallsOffEnd => "falls-off-end",
            Rule::ClwbMismatch => "clwb-mismatch",
            Rule::RegisterOutOfRange => "register-out-of-range",
            Rule::PcOrder => "pc-order",
            Rule::MissingEntry => "missing-entry",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub pc: u64,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pc {:#x}: {}: {}", self.pc, self.rule.name(), self.detail)
    }
}

/// Checks structural invariants with the default 16-register file.
pub fn validate(program: &Program) -> Vec<Violation> {
    validate_with(program, RegFile::default())
}

pub fn validate_with(program: &Program, rf: RegFile) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |pc: u64, rule: Rule, detail: String| out.push(Violation { pc, rule, detail });

    let names: HashSet<&str> = program.functions.iter().map(|f| f.name.as_str()).collect();
    if !names.contains(program.entry.as_str()) {
        push(0, Rule::MissingEntry, format!("entry function `{}` not found", program.entry));
    }

    let linearized = program.functions.iter().flat_map(|f| f.instructions()).any(|i| i.pc != 0);
    let mut last_pc: Option<u64> = None;

    for fi in program.layout_order() {
        let func = &program.functions[fi];
        let labels: HashSet<&str> = func.blocks.iter().map(|b| b.label.as_str()).collect();
        for bi in func.layout_order() {
            let block = &func.blocks[bi];
            if block.insts.is_empty() {
                push(0, Rule::EmptyBlock, format!("{}:{} has no instructions", func.name, block.label));
                continue;
            }
            let n = block.insts.len();
            for (k, ins) in block.insts.iter().enumerate() {
                let pc = ins.pc;
                if linearized {
                    if let Some(prev) = last_pc {
                        if pc <= prev {
                            push(pc, Rule::PcOrder, format!("pc {pc:#x} follows {prev:#x}"));
                        }
                    }
                    last_pc = Some(pc);
                }
                if ins.inst.is_terminator() && k + 1 != n {
                    push(pc, Rule::TerminatorNotLast, format!("`{}` is not last in {}", ins.inst, block.label));
                }
                match &ins.inst {
                    Inst::Br { target, .. } | Inst::Jmp { target } if !labels.contains(target.as_str()) => {
                        push(pc, Rule::UnresolvedLabel, format!("label `{target}`"));
                    }
                    Inst::Call { callee } if !names.contains(callee.as_str()) => {
                        push(pc, Rule::UnknownCallee, format!("function `{callee}`"));
                    }
                    Inst::Clwb { base, off } => {
                        let ok = k > 0
                            && matches!(&block.insts[k - 1].inst,
                                Inst::St { base: b, off: o, .. } if b == base && o == off);
                        if !ok {
                            push(pc, Rule::ClwbMismatch, "clwb does not follow a store to the same address".into());
                        }
                    }
                    _ => {}
                }
                let mut inst = ins.inst.clone();
                for r in inst.regs_mut() {
                    if let Reg::Phys(p) = *r {
                        if p >= rf.k {
                            push(pc, Rule::RegisterOutOfRange, format!("r{p} with K={}", rf.k));
                        }
                    }
                }
            }
            if block.terminator().is_none() {
                match &block.fallthrough {
                    None => push(
                        block.insts[n - 1].pc,
                        Rule::FallsOffEnd,
                        format!("{}:{} has no terminator and no successor", func.name, block.label),
                    ),
                    Some(l) if !labels.contains(l.as_str()) => {
                        push(block.insts[n - 1].pc, Rule::UnresolvedLabel, format!("fallthrough `{l}`"))
                    }
                    _ => {}
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{linearize, parse_assembly};

    fn rules(src: &str) -> Vec<Rule> {
        validate(&linearize(&parse_assembly(src).unwrap())).into_iter().map(|v| v.rule).collect()
    }

    #[test]
    fn valid_program() {
        assert!(rules("fn main {\ne:\n li v1, 8\n st v1 -> [v1+0]\n clwb [v1+0]\n halt\n}").is_empty());
    }

    #[test]
    fn clwb_operands_must_match() {
        assert_eq!(
            rules("fn main {\ne:\n li v1, 8\n st v1 -> [v1+0]\n clwb [v1+8]\n halt\n}"),
            vec![Rule::ClwbMismatch]
        );
    }

    #[test]
    fn branch_not_last() {
        assert_eq!(
            rules("fn main {\ne:\n li v1, 8\n beq v1, v1, x\n li v2, 1\nx:\n halt\n}"),
            vec![Rule::TerminatorNotLast]
        );
    }

    #[test]
    fn falling_off_and_range() {
        assert_eq!(rules("fn main {\ne:\n li v1, 8\n}"), vec![Rule::FallsOffEnd]);
        assert_eq!(rules("fn main {\ne:\n li r16, 8\n halt\n}"), vec![Rule::RegisterOutOfRange]);
    }
}
