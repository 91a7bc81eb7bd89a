use std::collections::{BTreeMap, HashMap};

use crate::isa::{AluOp, Cond, Function, Inst, Program, Reg, INST_BYTES};
use crate::recovery::RecoveryMetadata;

use super::MachineError;

/// Decoded instruction with register indices and resolved target PCs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Li { rd: u8, imm: u64 },
    Mov { rd: u8, rs: u8 },
    Alu { op: AluOp, rd: u8, ra: u8, rb: u8 },
    Ld { rd: u8, base: u8, off: i64 },
    St { rv: u8, base: u8, off: i64 },
    Clwb { base: u8, off: i64 },
    Br { cond: Cond, ra: u8, rb: u8, target: u64, fall: u64 },
    Jmp { target: u64 },
    /// `ret_to` is the PC after the call.
    Call { target: u64, ret_to: u64 },
    Ret,
    Boundary,
    Halt,
}

/// A compiled program (and optional recovery metadata) ready to simulate.
#[derive(Debug, Clone)]
pub struct Executable {
    /// Indexed by `pc / 4`, application code first then recovery code.
    pub code: Vec<Op>,
    /// Implicit jumps taken after the instruction at a PC (key), for blocks
    /// that fall through to a block placed elsewhere.
    pub fallthrough_jumps: HashMap<u64, u64>,
    pub entry_pc: u64,
    pub data: BTreeMap<u64, i64>,
    pub k: u8,
    pub app_code_end: u64,
    pub metadata: Option<RecoveryMetadata>,
}

fn reg(r: Reg, k: u8) -> Result<u8, MachineError> {
    match r {
        Reg::Phys(p) if p < k => Ok(p),
        Reg::Phys(p) => Err(MachineError::Load(format!("register r{p} out of range"))),
        Reg::Virt(v) => Err(MachineError::Load(format!("virtual register v{v} in executable code"))),
    }
}

fn lower_function(
    f: &Function,
    entries: &HashMap<&str, u64>,
    k: u8,
    code: &mut BTreeMap<u64, Op>,
    jumps: &mut HashMap<u64, u64>,
) -> Result<(), MachineError> {
    let start: HashMap<&str, u64> = f
        .blocks
        .iter()
        .filter_map(|b| b.insts.first().map(|i| (b.label.as_str(), i.pc)))
        .collect();
    let label_pc = |l: &str| {
        start.get(l).copied().ok_or_else(|| MachineError::Load(format!("{}: unresolved label {l}", f.name)))
    };
    for b in &f.blocks {
        let Some(last) = b.insts.last() else {
            return Err(MachineError::Load(format!("{}: empty block {}", f.name, b.label)));
        };
        for i in &b.insts {
            let op = match &i.inst {
                Inst::Li { rd, imm } => Op::Li { rd: reg(*rd, k)?, imm: *imm as u64 },
                Inst::Mov { rd, rs } => Op::Mov { rd: reg(*rd, k)?, rs: reg(*rs, k)? },
                Inst::Alu { op, rd, ra, rb } => Op::Alu { op: *op, rd: reg(*rd, k)?, ra: reg(*ra, k)?, rb: reg(*rb, k)? },
                Inst::Ld { rd, base, off } => Op::Ld { rd: reg(*rd, k)?, base: reg(*base, k)?, off: *off },
                Inst::St { rv, base, off } => Op::St { rv: reg(*rv, k)?, base: reg(*base, k)?, off: *off },
                Inst::Clwb { base, off } => Op::Clwb { base: reg(*base, k)?, off: *off },
                Inst::Br { cond, ra, rb, target } => {
                    let fall = match &b.fallthrough {
                        Some(l) => label_pc(l)?,
                        None => return Err(MachineError::Load(format!("{}: branch without fallthrough", f.name))),
                    };
                    Op::Br { cond: *cond, ra: reg(*ra, k)?, rb: reg(*rb, k)?, target: label_pc(target)?, fall }
                }
                Inst::Jmp { target } => Op::Jmp { target: label_pc(target)? },
                Inst::Call { callee } => Op::Call {
                    target: *entries
                        .get(callee.as_str())
                        .ok_or_else(|| MachineError::Load(format!("unknown function {callee}")))?,
                    ret_to: i.pc + INST_BYTES,
                },
                Inst::Ret => Op::Ret,
                Inst::Boundary(_) => Op::Boundary,
                Inst::Halt => Op::Halt,
            };
            if code.insert(i.pc, op).is_some() {
                return Err(MachineError::Load(format!("duplicate pc {:#x}", i.pc)));
            }
        }
        if !last.inst.is_terminator() {
            let Some(l) = &b.fallthrough else {
                return Err(MachineError::Load(format!("{}: block {} falls off the end", f.name, b.label)));
            };
            let target = label_pc(l)?;
            if target != last.pc + INST_BYTES {
                jumps.insert(last.pc, target);
            }
        }
    }
    Ok(())
}

impl Executable {
    /// Builds an executable from a laid-out program with physical registers.
    pub fn new(program: &Program, metadata: Option<RecoveryMetadata>, k: u8) -> Result<Self, MachineError> {
        let mut entries: HashMap<&str, u64> = HashMap::new();
        for f in &program.functions {
            if let Some(i) = f.blocks.first().and_then(|b| b.insts.first()) {
                entries.insert(f.name.as_str(), i.pc);
            }
        }
        let entry_pc = *entries
            .get(program.entry.as_str())
            .ok_or_else(|| MachineError::Load(format!("entry function {} missing", program.entry)))?;
        let mut code = BTreeMap::new();
        let mut jumps = HashMap::new();
        for f in &program.functions {
            lower_function(f, &entries, k, &mut code, &mut jumps)?;
        }
        let app_code_end = program.code_end();
        if let Some(m) = &metadata {
            if m.k != k {
                return Err(MachineError::Load(format!("metadata built for K={}, machine has K={k}", m.k)));
            }
            if m.code_base < app_code_end {
                return Err(MachineError::Load("recovery code overlaps application code".into()));
            }
            for b in &m.blocks {
                let mut e = HashMap::new();
                e.insert(b.function.name.as_str(), b.address);
                lower_function(&b.function, &e, k, &mut code, &mut jumps)?;
            }
        }
        let mut flat = Vec::with_capacity(code.len());
        for (n, (pc, op)) in code.into_iter().enumerate() {
            if pc != n as u64 * INST_BYTES {
                return Err(MachineError::Load(format!("gap in code before pc {pc:#x}")));
            }
            flat.push(op);
        }
        Ok(Executable {
            code: flat,
            fallthrough_jumps: jumps,
            entry_pc,
            data: program.data.clone(),
            k,
            app_code_end,
            metadata,
        })
    }

    pub fn op_at(&self, pc: u64) -> Option<Op> {
        if !pc.is_multiple_of(INST_BYTES) {
            return None;
        }
        self.code.get((pc / INST_BYTES) as usize).copied()
    }

    /// PC reached after the non-branching instruction at `pc`.
    pub fn next_pc(&self, pc: u64) -> u64 {
        self.fallthrough_jumps.get(&pc).copied().unwrap_or(pc + INST_BYTES)
    }
}
