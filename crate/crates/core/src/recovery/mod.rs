//! Replay-based recovery: per-region recovery code, the region start to
//! recovery block map (RM), per-region store counting tables (CM / SC
//! tables), energy-bounded region splitting and the boot-time lookup.

mod energy;
mod generate;
mod metafile;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::isa::Function;
use crate::memory::CheckpointKind;

pub use energy::{estimate_recovery_energy, split_regions_over_budget, EnergyModel, Split};
pub use generate::{compute_regions, generate_recovery};
pub use metafile::{parse_metadata, write_metadata, METADATA_HEADER};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecoveryError {
    #[error("region at {start_pc:#x} is not straight-line (pc {pc:#x})")]
    NonStraightLineRegion { start_pc: u64, pc: u64 },
    #[error("pc {pc:#x} is not covered by any region")]
    UncoveredCode { pc: u64 },
    #[error("unknown region {0:#x}")]
    UnknownRegion(u64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("metadata line {line}: {reason}")]
    Metadata { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScEntry {
    pub store_pc: u64,
    pub count: u32,
}

/// Store PCs of one region with their running counts from the region start.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SCTable {
    pub entries: Vec<ScEntry>,
}

impl SCTable {
    pub fn from_store_pcs(pcs: &[u64]) -> Self {
        SCTable {
            entries: pcs
                .iter()
                .enumerate()
                .map(|(i, &store_pc)| ScEntry { store_pc, count: i as u32 + 1 })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Count of the greatest store PC not above `pc`, or 0.
    pub fn count_at(&self, pc: u64) -> u32 {
        let i = self.entries.partition_point(|e| e.store_pc <= pc);
        if i == 0 {
            0
        } else {
            self.entries[i - 1].count
        }
    }
}

/// A region as a closed PC range in layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub start_pc: u64,
    pub end_pc: u64,
}

/// Recovery code for one region, as a function whose PCs start at
/// `address`. Stores are replayed in program order; the region register
/// carries the replay count on entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryBlock {
    pub region_start_pc: u64,
    pub address: u64,
    pub kind: CheckpointKind,
    pub function: Function,
}

impl RecoveryBlock {
    /// Number of store replay groups.
    pub fn groups(&self) -> usize {
        self.function.instructions().filter(|i| i.inst.is_store()).count()
    }

    pub fn len(&self) -> usize {
        self.function.instruction_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lookup {
    pub block_address: u64,
    pub replay_count: u32,
}

/// Everything recovery needs at boot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryMetadata {
    pub kind: CheckpointKind,
    pub k: u8,
    /// First PC of recovery code; all application code lies below it.
    pub code_base: u64,
    pub regions: Vec<Region>,
    pub rm: BTreeMap<u64, u64>,
    pub cm: BTreeMap<u64, SCTable>,
    pub blocks: Vec<RecoveryBlock>,
}

impl RecoveryMetadata {
    pub fn region(&self, start_pc: u64) -> Option<Region> {
        let i = self.regions.binary_search_by_key(&start_pc, |r| r.start_pc).ok()?;
        Some(self.regions[i])
    }

    pub fn block(&self, region_start_pc: u64) -> Option<&RecoveryBlock> {
        self.blocks.iter().find(|b| b.region_start_pc == region_start_pc)
    }

    /// Total instructions of recovery code.
    pub fn code_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }
}

/// Finds the recovery block and how many of the region's stores to replay.
///
/// A failure PC outside the region, or sitting on a boundary (the next
/// region's boundary had not retired yet), means the whole region ran, so
/// every store is replayed.
pub fn lookup_recovery(
    meta: &RecoveryMetadata,
    region_start_pc: u64,
    failure_pc: u64,
) -> Result<Lookup, RecoveryError> {
    let region = meta.region(region_start_pc).ok_or(RecoveryError::UnknownRegion(region_start_pc))?;
    let block_address = *meta.rm.get(&region_start_pc).ok_or(RecoveryError::UnknownRegion(region_start_pc))?;
    let sc = &meta.cm[&region_start_pc];
    let at_boundary = meta.regions.binary_search_by_key(&failure_pc, |r| r.start_pc).is_ok();
    let replay_count = if at_boundary || failure_pc < region.start_pc || failure_pc > region.end_pc {
        sc.len() as u32
    } else {
        // The failure PC has not executed yet; only stores before it retired.
        sc.count_at(failure_pc - 1)
    };
    Ok(Lookup { block_address, replay_count })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta_with(stores: &[u64]) -> RecoveryMetadata {
        let mut rm = BTreeMap::new();
        rm.insert(96, 0x1000);
        let mut cm = BTreeMap::new();
        cm.insert(96, SCTable::from_store_pcs(stores));
        RecoveryMetadata {
            kind: CheckpointKind::Nvp,
            k: 16,
            code_base: 0x1000,
            regions: vec![Region { start_pc: 96, end_pc: 200 }, Region { start_pc: 204, end_pc: 220 }],
            rm,
            cm,
            blocks: vec![],
        }
    }

    #[test]
    fn counts_follow_failure_pc() {
        let m = meta_with(&[100, 140, 180]);
        let count = |pc| lookup_recovery(&m, 96, pc).unwrap().replay_count;
        assert_eq!(count(98), 0);
        assert_eq!(count(140), 1);
        assert_eq!(count(144), 2);
        assert_eq!(count(160), 2);
        assert_eq!(count(184), 3);
        assert_eq!(count(204), 3);
        assert_eq!(lookup_recovery(&m, 97, 100), Err(RecoveryError::UnknownRegion(97)));
    }

    #[test]
    fn sc_counts_are_consecutive() {
        let t = SCTable::from_store_pcs(&[4, 8, 12, 16, 20]);
        let counts: Vec<u32> = t.entries.iter().map(|e| e.count).collect();
        assert_eq!(counts, [1, 2, 3, 4, 5]);
    }
}
