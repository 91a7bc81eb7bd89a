use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::compiler::{insert_boundaries, RegionBoundarySet};
use crate::isa::{linearize, BoundaryOrigin, Inst, Loc, Program, RegFile};
use crate::memory::CheckpointKind;

use super::{generate_recovery, RecoveryBlock, RecoveryError, RecoveryMetadata};

/// Linear per-instruction-class energy model for recovery code, in pJ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    pub alu: f64,
    pub load: f64,
    /// Stores replayed during recovery persist synchronously.
    pub store_persist: f64,
    pub branch: f64,
    #[serde(rename = "move")]
    pub mov: f64,
    /// Register-file restore, block setup and the final resume.
    pub restore_constant: f64,
    pub capacitor_budget: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            alu: 1.0,
            load: 2.0,
            store_persist: 10.0,
            branch: 1.0,
            mov: 1.0,
            restore_constant: 100.0,
            capacitor_budget: 2000.0,
        }
    }
}

impl EnergyModel {
    pub fn class_energy(&self, inst: &Inst) -> f64 {
        match inst {
            Inst::Li { .. } | Inst::Mov { .. } => self.mov,
            Inst::Alu { .. } => self.alu,
            Inst::Ld { .. } => self.load,
            Inst::St { .. } => self.store_persist,
            _ => self.branch,
        }
    }

    pub fn check(&self) -> Result<(), RecoveryError> {
        let all = [self.alu, self.load, self.store_persist, self.branch, self.mov, self.restore_constant];
        if all.iter().all(|&e| e > 0.0) && self.capacitor_budget > 0.0 {
            Ok(())
        } else {
            Err(RecoveryError::Config("energy model entries must be positive".into()))
        }
    }

    /// Every entry multiplied by `f`, budget included.
    pub fn scaled(&self, f: f64) -> Self {
        EnergyModel {
            alu: self.alu * f,
            load: self.load * f,
            store_persist: self.store_persist * f,
            branch: self.branch * f,
            mov: self.mov * f,
            restore_constant: self.restore_constant * f,
            capacitor_budget: self.capacitor_budget * f,
        }
    }
}

/// Worst-case energy of running a recovery block: the restore constant plus
/// every instruction of the store replay groups.
pub fn estimate_recovery_energy(block: &RecoveryBlock, model: &EnergyModel) -> f64 {
    let groups: f64 = block
        .function
        .blocks
        .iter()
        .filter(|b| b.label.starts_with('g'))
        .flat_map(|b| b.insts.iter())
        .map(|i| model.class_energy(&i.inst))
        .sum();
    model.restore_constant + groups
}

#[derive(Debug, Clone)]
pub struct Split {
    pub program: Program,
    pub metadata: RecoveryMetadata,
    /// Number of boundaries added.
    pub splits: usize,
}

/// Splits every region whose recovery estimate exceeds the budget at its
/// store-count midpoint, regenerating recovery code until all blocks fit.
pub fn split_regions_over_budget(
    program: &Program,
    model: &EnergyModel,
    kind: CheckpointKind,
    rf: RegFile,
) -> Result<Split, RecoveryError> {
    model.check()?;
    let mut program = program.clone();
    let mut splits = 0;
    loop {
        let boundaries = RegionBoundarySet::from_program(&program);
        let meta = generate_recovery(&program, &boundaries, kind, rf)?;
        let mut cut_pcs = Vec::new();
        for b in &meta.blocks {
            if estimate_recovery_energy(b, model) <= model.capacitor_budget {
                continue;
            }
            let n = b.groups();
            if n <= 1 {
                return Err(RecoveryError::Config(if n == 0 {
                    "restore cost exceeds capacitor budget".into()
                } else {
                    "single-store recovery exceeds capacitor budget".into()
                }));
            }
            cut_pcs.push(meta.cm[&b.region_start_pc].entries[n / 2].store_pc);
        }
        if cut_pcs.is_empty() {
            return Ok(Split { program, metadata: meta, splits });
        }
        splits += cut_pcs.len();
        for f in &mut program.functions {
            let mut at = BTreeMap::new();
            for (bi, blk) in f.blocks.iter().enumerate() {
                for (idx, ins) in blk.insts.iter().enumerate() {
                    if cut_pcs.contains(&ins.pc) {
                        at.insert(Loc { block: bi, idx }, BoundaryOrigin::EnergySplit);
                    }
                }
            }
            if !at.is_empty() {
                *f = insert_boundaries(f, &at);
            }
        }
        program = linearize(&program);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_assembly;

    fn eight_stores() -> Program {
        let mut src = String::from("fn main {\ne:\n rboundary\n li r1, 64\n li r2, 7\n");
        for i in 0..8 {
            src += &format!(" st r2 -> [r1+{}]\n clwb [r1+{}]\n", 8 * i, 8 * i);
        }
        src += " halt\n}";
        linearize(&parse_assembly(&src).unwrap())
    }

    #[test]
    fn estimate_matches_hand_tally() {
        let p = linearize(&parse_assembly("fn main {\ne:\n rboundary\n li r1, 64\n st r1 -> [r1+0]\n clwb [r1+0]\n st r1 -> [r1+8]\n clwb [r1+8]\n halt\n}").unwrap());
        let b = RegionBoundarySet::from_program(&p);
        let m = generate_recovery(&p, &b, CheckpointKind::Nvp, RegFile::default()).unwrap();
        let model = EnergyModel { restore_constant: 100.0, ..EnergyModel::default() };
        assert_eq!(estimate_recovery_energy(&m.blocks[0], &model), 132.0);
    }

    #[test]
    fn eight_store_region_splits_in_half() {
        let p = eight_stores();
        let model = EnergyModel { capacitor_budget: 100.0 + 4.5 * 16.0, ..EnergyModel::default() };
        let s = split_regions_over_budget(&p, &model, CheckpointKind::Nvp, RegFile::default()).unwrap();
        assert_eq!(s.splits, 1);
        let groups: Vec<usize> = s.metadata.blocks.iter().map(|b| b.groups()).collect();
        assert_eq!(groups, [4, 4]);
    }

    #[test]
    fn budget_below_single_store_is_config_error() {
        let model = EnergyModel { capacitor_budget: 110.0, ..EnergyModel::default() };
        let err = split_regions_over_budget(&eight_stores(), &model, CheckpointKind::Nvp, RegFile::default());
        assert!(matches!(err, Err(RecoveryError::Config(_))));
    }
}
