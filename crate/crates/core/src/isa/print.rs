use std::fmt;

use super::{Function, Inst, Program};

fn mem(f: &mut fmt::Formatter<'_>, base: &super::Reg, off: i64) -> fmt::Result {
    if off < 0 {
        write!(f, "[{base}-{}]", off.unsigned_abs())
    } else {
        write!(f, "[{base}+{off}]")
    }
}

impl fmt::Display for Inst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Inst::Li { rd, imm } => write!(f, "li {rd}, {imm}"),
            Inst::Mov { rd, rs } => write!(f, "mov {rd}, {rs}"),
            Inst::Alu { op, rd, ra, rb } => write!(f, "{} {rd}, {ra}, {rb}", op.mnemonic()),
            Inst::Ld { rd, base, off } => {
                write!(f, "ld ")?;
                mem(f, base, *off)?;
                write!(f, " -> {rd}")
            }
            Inst::St { rv, base, off } => {
                write!(f, "st {rv} -> ")?;
                mem(f, base, *off)
            }
            Inst::Clwb { base, off } => {
                write!(f, "clwb ")?;
                mem(f, base, *off)
            }
            Inst::Br { cond, ra, rb, target } => write!(f, "{} {ra}, {rb}, {target}", cond.mnemonic()),
            Inst::Jmp { target } => write!(f, "jmp {target}"),
            Inst::Call { callee } => write!(f, "call {callee}"),
            Inst::Ret => write!(f, "ret"),
            Inst::Boundary(None) => write!(f, "rboundary"),
            Inst::Boundary(Some(o)) => write!(f, "rboundary {}", o.tag()),
            Inst::Halt => write!(f, "halt"),
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "fn {} {{", self.name)?;
        for b in &self.blocks {
            writeln!(f, "{}:", b.label)?;
            for i in &b.insts {
                writeln!(f, "  {}", i.inst)?;
            }
        }
        writeln!(f, "}}")
    }
}

/// Canonical text form; [`super::parse_assembly`] reads it back unchanged.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entry {}", self.entry)?;
        let mut run: Vec<(u64, Vec<i64>)> = Vec::new();
        for (&addr, &w) in &self.data {
            match run.last_mut() {
                Some((start, words)) if *start + 8 * words.len() as u64 == addr => words.push(w),
                _ => run.push((addr, vec![w])),
            }
        }
        for (start, words) in run {
            let list: Vec<String> = words.iter().map(|w| w.to_string()).collect();
            writeln!(f, "data {start:#x} = {}", list.join(", "))?;
        }
        for func in &self.functions {
            write!(f, "{func}")?;
        }
        Ok(())
    }
}
