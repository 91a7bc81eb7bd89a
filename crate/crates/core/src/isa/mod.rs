//! The miniature RISC instruction set shared by the compiler and the simulator.
//!
//! Programs are written in a line-oriented assembly (see [`parse_assembly`])
//! using virtual registers `v<N>` before allocation and physical registers
//! `r<N>` afterwards. Every instruction is a fixed four bytes for PC
//! arithmetic; memory words are eight bytes and must be aligned.

pub(crate) mod layout;
mod parse;
mod print;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

pub use layout::{linearize, FlatFunction, Loc};
pub use parse::{parse_assembly, ParseError};
pub use validate::{validate, validate_with, Rule, Violation};

/// Bytes per encoded instruction.
pub const INST_BYTES: u64 = 4;
/// Bytes per memory word.
pub const WORD_BYTES: u64 = 8;
/// Default size of the physical register file.
pub const DEFAULT_K: u8 = 16;

/// Physical register file shape and the registers the compiler reserves.
///
/// The top three registers are never handed to program values: `K-3` is
/// the stack pointer, `K-2` the link register and `K-1` mirrors the region
/// register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegFile {
    pub k: u8,
}

impl RegFile {
    pub const fn new(k: u8) -> Self {
        RegFile { k }
    }

    pub fn sp(&self) -> Reg {
        Reg::Phys(self.k - 3)
    }

    pub fn lr(&self) -> Reg {
        Reg::Phys(self.k - 2)
    }

    pub fn region(&self) -> Reg {
        Reg::Phys(self.k - 1)
    }

    /// Registers available to the allocator, lowest index first.
    pub fn allocatable(&self) -> impl Iterator<Item = u8> {
        0..self.k.saturating_sub(3)
    }

    pub fn allocatable_count(&self) -> usize {
        self.k.saturating_sub(3) as usize
    }
}

impl Default for RegFile {
    fn default() -> Self {
        RegFile::new(DEFAULT_K)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reg {
    Virt(u32),
    Phys(u8),
}

impl Reg {
    pub fn is_virtual(&self) -> bool {
        matches!(self, Reg::Virt(_))
    }

    pub fn vreg(&self) -> Option<u32> {
        match self {
            Reg::Virt(v) => Some(*v),
            Reg::Phys(_) => None,
        }
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reg::Virt(v) => write!(f, "v{v}"),
            Reg::Phys(p) => write!(f, "r{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
    Shl,
}

impl AluOp {
    pub fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Mul => a.wrapping_mul(b),
            AluOp::Shl => a.wrapping_shl((b & 63) as u32),
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::Mul => "mul",
            AluOp::Shl => "shl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cond {
    Eq,
    Ne,
    Lt,
}

impl Cond {
    /// `Lt` compares as signed 64-bit integers.
    pub fn holds(self, a: u64, b: u64) -> bool {
        match self {
            Cond::Eq => a == b,
            Cond::Ne => a != b,
            Cond::Lt => (a as i64) < (b as i64),
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Cond::Eq => "beq",
            Cond::Ne => "bne",
            Cond::Lt => "blt",
        }
    }
}

/// Which compiler phase placed a region boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryOrigin {
    InitialCall,
    InitialBranchEnd,
    Pressure,
    SpillFix,
    EnergySplit,
    LoopBackEdge,
    MergeCut,
}

impl BoundaryOrigin {
    pub const ALL: [BoundaryOrigin; 7] = [
        BoundaryOrigin::InitialCall,
        BoundaryOrigin::InitialBranchEnd,
        BoundaryOrigin::Pressure,
        BoundaryOrigin::SpillFix,
        BoundaryOrigin::EnergySplit,
        BoundaryOrigin::LoopBackEdge,
        BoundaryOrigin::MergeCut,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            BoundaryOrigin::InitialCall => "call",
            BoundaryOrigin::InitialBranchEnd => "branch",
            BoundaryOrigin::Pressure => "pressure",
            BoundaryOrigin::SpillFix => "spillfix",
            BoundaryOrigin::EnergySplit => "energy",
            BoundaryOrigin::LoopBackEdge => "backedge",
            BoundaryOrigin::MergeCut => "merge",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.tag() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Inst {
    Li { rd: Reg, imm: i64 },
    Mov { rd: Reg, rs: Reg },
    Alu { op: AluOp, rd: Reg, ra: Reg, rb: Reg },
    Ld { rd: Reg, base: Reg, off: i64 },
    St { rv: Reg, base: Reg, off: i64 },
    Clwb { base: Reg, off: i64 },
    Br { cond: Cond, ra: Reg, rb: Reg, target: String },
    Jmp { target: String },
    Call { callee: String },
    Ret,
    /// The optional origin tag is bookkeeping only; it has no semantics.
    Boundary(Option<BoundaryOrigin>),
    Halt,
}

impl Inst {
    pub fn is_terminator(&self) -> bool {
        matches!(self, Inst::Br { .. } | Inst::Jmp { .. } | Inst::Ret | Inst::Halt)
    }

    pub fn is_store(&self) -> bool {
        matches!(self, Inst::St { .. })
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, Inst::Boundary(_))
    }

    /// Registers read by the instruction. `Ret` reads the link register.
    pub fn uses(&self, rf: RegFile) -> Vec<Reg> {
        match self {
            Inst::Li { .. } => vec![],
            Inst::Mov { rs, .. } => vec![*rs],
            Inst::Alu { ra, rb, .. } => vec![*ra, *rb],
            Inst::Ld { base, .. } => vec![*base],
            Inst::St { rv, base, .. } => vec![*rv, *base],
            Inst::Clwb { base, .. } => vec![*base],
            Inst::Br { ra, rb, .. } => vec![*ra, *rb],
            Inst::Ret => vec![rf.lr()],
            Inst::Jmp { .. } | Inst::Call { .. } | Inst::Boundary(_) | Inst::Halt => vec![],
        }
    }

    /// Registers written by the instruction. `Call` writes the link register.
    pub fn defs(&self, rf: RegFile) -> Vec<Reg> {
        match self {
            Inst::Li { rd, .. } | Inst::Mov { rd, .. } | Inst::Alu { rd, .. } | Inst::Ld { rd, .. } => {
                vec![*rd]
            }
            Inst::Call { .. } => vec![rf.lr()],
            _ => vec![],
        }
    }

    /// Mutable references to every register operand, uses and defs alike.
    pub fn regs_mut(&mut self) -> Vec<&mut Reg> {
        match self {
            Inst::Li { rd, .. } => vec![rd],
            Inst::Mov { rd, rs } => vec![rd, rs],
            Inst::Alu { rd, ra, rb, .. } => vec![rd, ra, rb],
            Inst::Ld { rd, base, .. } => vec![rd, base],
            Inst::St { rv, base, .. } => vec![rv, base],
            Inst::Clwb { base, .. } => vec![base],
            Inst::Br { ra, rb, .. } => vec![ra, rb],
            _ => vec![],
        }
    }

    pub fn map_uses(&mut self, mut f: impl FnMut(Reg) -> Reg) {
        match self {
            Inst::Mov { rs, .. } => *rs = f(*rs),
            Inst::Alu { ra, rb, .. } | Inst::Br { ra, rb, .. } => {
                *ra = f(*ra);
                *rb = f(*rb);
            }
            Inst::Ld { base, .. } | Inst::Clwb { base, .. } => *base = f(*base),
            Inst::St { rv, base, .. } => {
                *rv = f(*rv);
                *base = f(*base);
            }
            _ => {}
        }
    }

    pub fn map_defs(&mut self, mut f: impl FnMut(Reg) -> Reg) {
        match self {
            Inst::Li { rd, .. } | Inst::Mov { rd, .. } | Inst::Alu { rd, .. } | Inst::Ld { rd, .. } => {
                *rd = f(*rd)
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub inst: Inst,
    /// Assigned by [`linearize`]; zero before that.
    pub pc: u64,
}

impl Instruction {
    pub fn new(inst: Inst) -> Self {
        Instruction { inst, pc: 0 }
    }
}

impl From<Inst> for Instruction {
    fn from(inst: Inst) -> Self {
        Instruction::new(inst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub label: String,
    pub insts: Vec<Instruction>,
    /// Block that executes next when the last instruction does not transfer
    /// control (or a conditional branch is not taken). Fixed at parse time
    /// as the next block in declaration order.
    pub fallthrough: Option<String>,
}

impl BasicBlock {
    pub fn new(label: impl Into<String>) -> Self {
        BasicBlock { label: label.into(), insts: Vec::new(), fallthrough: None }
    }

    pub fn terminator(&self) -> Option<&Inst> {
        self.insts.last().map(|i| &i.inst).filter(|i| i.is_terminator())
    }

    /// Successor labels: branch/jump targets plus the fallthrough if it can
    /// be reached.
    pub fn successors(&self) -> Vec<String> {
        match self.terminator() {
            Some(Inst::Jmp { target }) => vec![target.clone()],
            Some(Inst::Br { target, .. }) => {
                let mut s = vec![target.clone()];
                if let Some(f) = &self.fallthrough {
                    if f != target {
                        s.push(f.clone());
                    }
                }
                s
            }
            Some(Inst::Ret) | Some(Inst::Halt) => vec![],
            _ => self.fallthrough.iter().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    /// Blocks in declaration order; the first is the entry block.
    pub blocks: Vec<BasicBlock>,
}

impl Function {
    pub fn entry(&self) -> &BasicBlock {
        &self.blocks[0]
    }

    pub fn block(&self, label: &str) -> Option<&BasicBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.label == label)
    }

    /// Block indices in layout order: entry first, then the remaining blocks
    /// sorted by label.
    pub fn layout_order(&self) -> Vec<usize> {
        if self.blocks.is_empty() {
            return vec![];
        }
        let mut rest: Vec<usize> = (1..self.blocks.len()).collect();
        rest.sort_by(|&a, &b| self.blocks[a].label.cmp(&self.blocks[b].label));
        let mut order = vec![0];
        order.extend(rest);
        order
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.blocks.iter().flat_map(|b| b.insts.iter())
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.insts.len()).sum()
    }

    /// Largest virtual register number in use, if any.
    pub fn max_vreg(&self) -> Option<u32> {
        let mut max = None;
        for i in self.instructions() {
            let mut inst = i.inst.clone();
            for r in inst.regs_mut() {
                if let Reg::Virt(v) = *r {
                    max = Some(max.map_or(v, |m: u32| m.max(v)));
                }
            }
        }
        max
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub functions: Vec<Function>,
    pub entry: String,
    /// Initial NVM contents, as aligned 8-byte words.
    pub data: BTreeMap<u64, i64>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut Function> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    /// Function indices in layout order: entry function first, then by name.
    pub fn layout_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.functions.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = &self.functions[a];
            let fb = &self.functions[b];
            (fa.name != self.entry, &fa.name).cmp(&(fb.name != self.entry, &fb.name))
        });
        order
    }

    pub fn instruction_count(&self) -> usize {
        self.functions.iter().map(|f| f.instruction_count()).sum()
    }

    /// One past the highest PC used by the program.
    pub fn code_end(&self) -> u64 {
        self.functions
            .iter()
            .flat_map(|f| f.instructions())
            .map(|i| i.pc + INST_BYTES)
            .max()
            .unwrap_or(0)
    }

    /// Data segment expanded to little-endian bytes.
    pub fn data_bytes(&self) -> BTreeMap<u64, u8> {
        let mut out = BTreeMap::new();
        for (&addr, &w) in &self.data {
            for (i, b) in w.to_le_bytes().into_iter().enumerate() {
                out.insert(addr + i as u64, b);
            }
        }
        out
    }
}
