//! Cycle-level simulator of an in-order core with a cache, asynchronous
//! store persistence and just-in-time register checkpointing.

mod cache;
mod core;
mod exec;
mod run;
mod timing;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::DEFAULT_K;
use crate::memory::CheckpointKind;

pub use self::cache::{Cache, CacheConfig, Evicted};
pub use self::core::{Event, Machine, Mode, Stats, StoreRecord, StoreStall};
pub use self::exec::{Executable, Op};
pub use self::run::{apply_outage, nvm_digest, run_design, run_executable, run_machine, EnergyBreakdown, Outage, RunReport, REPORT_VERSION};
pub use self::timing::{NvmTech, NvmTiming, DEFAULT_CLOCK_NS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("invalid memory access at {0:#x}")]
    InvalidMemoryAccess(u64),
    #[error("unaligned access at {0:#x}")]
    UnalignedAccess(u64),
    #[error("the replaycache design needs recovery metadata")]
    MissingMetadata,
    #[error("no instruction at pc {0:#x}")]
    BadPc(u64),
    #[error("cannot load executable: {0}")]
    Load(String),
    #[error("run did not halt within {0} cycles")]
    NonTerminating(u64),
    #[error("recovery failed: {0}")]
    Recovery(String),
    #[error("machine is powered off")]
    PoweredOff,
}

/// Cache organisation being simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// Every access goes to NVM.
    NoCache,
    /// Volatile write-through cache; stores wait for NVM.
    #[serde(rename = "wt")]
    WriteThrough,
    /// Non-volatile cache with slow accesses; contents survive outages.
    NvCache,
    /// Volatile write-back cache backed up to NVM at every checkpoint.
    NvSram,
    /// Volatile write-back cache with asynchronous persists, boundary
    /// stalls and store replay.
    ReplayCache,
    /// Volatile write-back cache with no persistence support. Loses data on
    /// outages; used to show that the crash sweep catches it.
    #[serde(rename = "wbunsafe")]
    WriteBackUnsafe,
}

impl Design {
    pub const ALL: [Design; 6] = [
        Design::NoCache,
        Design::WriteThrough,
        Design::NvCache,
        Design::NvSram,
        Design::ReplayCache,
        Design::WriteBackUnsafe,
    ];

    /// The designs compared in benchmarks.
    pub const COMPARED: [Design; 5] =
        [Design::NoCache, Design::WriteThrough, Design::NvCache, Design::NvSram, Design::ReplayCache];

    pub fn name(self) -> &'static str {
        match self {
            Design::NoCache => "nocache",
            Design::WriteThrough => "wt",
            Design::NvCache => "nvcache",
            Design::NvSram => "nvsram",
            Design::ReplayCache => "replaycache",
            Design::WriteBackUnsafe => "wbunsafe",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }

    pub fn has_cache(self) -> bool {
        self != Design::NoCache
    }

    /// Whether cache contents survive a power outage.
    pub fn retains_cache(self) -> bool {
        matches!(self, Design::NvCache | Design::NvSram)
    }
}

/// Energy per event in picojoules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConstants {
    pub core_per_cycle: f64,
    pub cache_per_access: f64,
    pub nvm_read: f64,
    pub nvm_write: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        EnergyConstants { core_per_cycle: 5.0, cache_per_access: 1.0, nvm_read: 20.0, nvm_write: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineConfig {
    pub k: u8,
    pub nvm: NvmTiming,
    pub clock_ns: f64,
    pub cache: CacheConfig,
    pub checkpoint: CheckpointKind,
    /// Non-volatile cache access latencies in cycles.
    pub nvcache_read_cycles: u64,
    pub nvcache_write_cycles: u64,
    /// Cycles to save or restore one register in NVFF.
    pub nvff_cycles_per_word: u64,
    /// Power-off duration for forced outages.
    pub off_cycles: u64,
    pub energy: EnergyConstants,
    /// Check at every boundary that the region's stores reached NVM.
    pub check_persistence: bool,
    /// Give up after this many active cycles.
    pub max_cycles: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            k: DEFAULT_K,
            nvm: NvmTiming::reram(),
            clock_ns: DEFAULT_CLOCK_NS,
            cache: CacheConfig::default(),
            checkpoint: CheckpointKind::Nvp,
            nvcache_read_cycles: 3,
            nvcache_write_cycles: 10,
            nvff_cycles_per_word: 1,
            off_cycles: 1000,
            energy: EnergyConstants::default(),
            check_persistence: true,
            max_cycles: 20_000_000,
        }
    }
}

impl MachineConfig {
    pub fn with_nvm(mut self, tech: NvmTech) -> Self {
        self.nvm = NvmTiming::for_tech(tech);
        self
    }

    pub fn with_checkpoint(mut self, kind: CheckpointKind) -> Self {
        self.checkpoint = kind;
        self
    }

    pub fn read_cycles(&self) -> u64 {
        self.nvm.read_cycles(self.clock_ns)
    }

    pub fn write_persist_cycles(&self) -> u64 {
        self.nvm.write_persist_cycles(self.clock_ns)
    }

    /// Cycles to write one register checkpoint.
    pub fn checkpoint_cycles(&self) -> u64 {
        let words = crate::memory::checkpoint_words(self.k);
        match self.checkpoint {
            CheckpointKind::Nvp => words * self.nvff_cycles_per_word,
            CheckpointKind::QuickRecall => words * self.write_persist_cycles(),
        }
    }

    /// Cycles to read one register checkpoint back.
    pub fn restore_cycles(&self) -> u64 {
        let words = crate::memory::checkpoint_words(self.k);
        match self.checkpoint {
            CheckpointKind::Nvp => words * self.nvff_cycles_per_word,
            CheckpointKind::QuickRecall => words * self.read_cycles(),
        }
    }
}

#[cfg(test)]
mod tests;
