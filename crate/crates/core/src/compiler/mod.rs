//! Store-register-preserving region formation.
//!
//! The pipeline per function is: liveness, register-pressure-aware region
//! partitioning, extension of store and branch operand intervals to their
//! region ends, linear-scan allocation, frame lowering, the post-allocation
//! cut before any overwrite of a store operand, and `clwb` insertion. The
//! whole program is then laid out and recovery metadata generated, splitting
//! regions whose recovery would exceed the energy budget.
//!
//! Calling convention: the compiler owns every physical register. Source
//! code uses virtual registers only and passes values through memory; all
//! allocatable registers are caller-saved.

mod clwb;
mod frame;
mod liveness;
mod partition;
mod preserve;
mod regalloc;
mod spillfix;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::isa::{linearize, validate_with, Function, Program, Reg, RegFile, Violation};
use crate::memory::CheckpointKind;
use crate::recovery::{split_regions_over_budget, EnergyModel, RecoveryError, RecoveryMetadata};

pub use clwb::insert_clwb;
pub use frame::lower_frame;
pub use liveness::{compute_live_intervals, LiveInterval};
pub use partition::{partition_regions, PartitionOptions, Partitioned, RegionBoundarySet};
pub(crate) use partition::insert_boundaries;
pub use preserve::preserve_store_registers;
pub use regalloc::{allocate_registers, Allocated, Allocation, FrameLayout, Spill};
pub use spillfix::preserve_spill_store_registers;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("v{vreg} used before definition at pc {pc:#x}")]
    UseBeforeDef { vreg: u32, pc: u64 },
    #[error("{func}: physical register r{reg} in source; write virtual registers only")]
    PhysicalRegisterInSource { func: String, reg: u8 },
    #[error("invalid program: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("register pressure cannot be met at pc {pc:#x}")]
    RegisterPressure { pc: u64 },
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompileOptions {
    pub regfile: RegFile,
    pub partition: PartitionOptions,
    pub energy: EnergyModel,
    pub checkpoint: CheckpointKind,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            regfile: RegFile::default(),
            partition: PartitionOptions::default(),
            energy: EnergyModel::default(),
            checkpoint: CheckpointKind::Nvp,
        }
    }
}

/// One function after every per-function pass.
#[derive(Debug, Clone)]
pub struct LoweredFunction {
    pub function: Function,
    pub allocation: Allocation,
    pub frame: FrameLayout,
    /// Boundaries after partitioning, before allocation.
    pub partitioned: Partitioned,
}

#[derive(Debug, Clone)]
pub struct CompiledProgram {
    pub program: Program,
    pub boundaries: RegionBoundarySet,
    pub metadata: RecoveryMetadata,
    pub allocations: BTreeMap<String, Allocation>,
    /// Boundaries added to keep recovery under the energy budget.
    pub energy_splits: usize,
}

/// Runs the per-function passes on one function with PCs local to it.
pub fn lower_function(func: &Function, opts: &CompileOptions) -> Result<LoweredFunction, CompileError> {
    let rf = opts.regfile;
    let mut f = func.clone();
    crate::isa::layout::assign_pcs(&mut f, 0);
    let intervals = compute_live_intervals(&f, rf)?;
    let partitioned = partition_regions(&f, &intervals, rf.allocatable_count(), opts.partition);
    let alloc = allocate_registers(&partitioned.function, rf)?;
    let framed = lower_frame(&alloc.function, alloc.frame, rf);
    let fixed = preserve_spill_store_registers(&framed, rf);
    let function = insert_clwb(&fixed.function);
    Ok(LoweredFunction { function, allocation: alloc.allocation, frame: alloc.frame, partitioned })
}

fn check_source(program: &Program, rf: RegFile) -> Result<(), CompileError> {
    let violations = validate_with(program, rf);
    if !violations.is_empty() {
        return Err(CompileError::Invalid(violations));
    }
    for f in &program.functions {
        for i in f.instructions() {
            let mut inst = i.inst.clone();
            if let Some(Reg::Phys(p)) = inst.regs_mut().into_iter().map(|r| *r).find(|r| !r.is_virtual()) {
                return Err(CompileError::PhysicalRegisterInSource { func: f.name.clone(), reg: p });
            }
        }
    }
    Ok(())
}

/// Compiles every function and lays out the program, without recovery
/// metadata. Regions need not be straight-line.
pub fn lower_program(
    program: &Program,
    opts: &CompileOptions,
) -> Result<(Program, BTreeMap<String, Allocation>), CompileError> {
    check_source(program, opts.regfile)?;
    let mut out = program.clone();
    let mut allocations = BTreeMap::new();
    for f in &mut out.functions {
        let lowered = lower_function(f, opts)?;
        allocations.insert(f.name.clone(), lowered.allocation);
        *f = lowered.function;
    }
    Ok((linearize(&out), allocations))
}

/// Full pipeline: lowering, layout and recovery generation.
pub fn compile(program: &Program, opts: &CompileOptions) -> Result<CompiledProgram, CompileError> {
    let (lowered, allocations) = lower_program(program, opts)?;
    let split = split_regions_over_budget(&lowered, &opts.energy, opts.checkpoint, opts.regfile)?;
    let boundaries = RegionBoundarySet::from_program(&split.program);
    Ok(CompiledProgram {
        program: split.program,
        boundaries,
        metadata: split.metadata,
        allocations,
        energy_splits: split.splits,
    })
}
