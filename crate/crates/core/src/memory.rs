//! Address map shared by the compiler's recovery code and the simulator.
//!
//! Program data starts at address 0 and the stack grows down from
//! [`STACK_TOP`]. The NVM checkpoint area used by QuickRecall and the window
//! through which recovery code reads the non-volatile flip-flops sit above
//! the stack. Code lives in a separate instruction space indexed by PC.

use serde::{Deserialize, Serialize};

pub const STACK_TOP: u64 = 0x8000;
/// Lowest address treated as stack when scoping NVM comparisons.
pub const STACK_LIMIT: u64 = 0x7000;
pub const CKPT_NVM_BASE: u64 = 0x9000;
pub const NVFF_BASE: u64 = 0xA000;
/// Bytes of addressable memory including both checkpoint areas.
pub const MEM_BYTES: u64 = 0xA200;

/// Where register state is saved at a power failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    /// Non-volatile processor: registers land in flip-flops next to the core.
    #[default]
    Nvp,
    /// Registers are written to a reserved NVM area.
    QuickRecall,
}

impl CheckpointKind {
    pub fn base(self) -> u64 {
        match self {
            CheckpointKind::Nvp => NVFF_BASE,
            CheckpointKind::QuickRecall => CKPT_NVM_BASE,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CheckpointKind::Nvp => "nvp",
            CheckpointKind::QuickRecall => "quickrecall",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "nvp" => Some(CheckpointKind::Nvp),
            "quickrecall" | "qr" => Some(CheckpointKind::QuickRecall),
            _ => None,
        }
    }
}

/// Checkpoint slot holding the saved PC, for a `k`-register file.
pub fn pc_slot(k: u8) -> u64 {
    k as u64
}

/// Checkpoint slot holding the saved region register.
pub fn region_slot(k: u8) -> u64 {
    k as u64 + 1
}

/// Words written per checkpoint: every register, the PC and the region
/// register.
pub fn checkpoint_words(k: u8) -> u64 {
    k as u64 + 2
}
