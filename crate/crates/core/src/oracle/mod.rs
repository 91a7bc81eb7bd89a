//! Independent correctness checks: a static store-integrity verifier and a
//! differential crash-injection sweep.

mod integrity;
pub mod mutants;
mod sweep;

use std::collections::BTreeMap;
use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::machine::{MachineError, StoreRecord};
use crate::memory::{STACK_LIMIT, STACK_TOP};

pub use integrity::{verify_store_integrity, IntegrityViolation, ViolationKind};
pub use sweep::{exhaustive_crash_sweep, golden_run, GoldenResult, Injection, Mismatch, SweepOptions, SweepReport};

pub const DEFAULT_SWEEP_BOUND: u64 = 5000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("golden run needs more than {0} cycles")]
    NonTerminatingRun(u64),
    #[error(transparent)]
    Machine(#[from] MachineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ByteDiff {
    pub address: u64,
    pub a: u8,
    pub b: u8,
}

/// Address ranges that hold program state: declared data, every word the
/// program stored to, and the stack.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Footprint {
    ranges: Vec<Range<u64>>,
}

impl Footprint {
    pub fn new(mut ranges: Vec<Range<u64>>) -> Self {
        ranges.sort_by_key(|r| (r.start, r.end));
        let mut merged: Vec<Range<u64>> = Vec::new();
        for r in ranges.into_iter().filter(|r| r.start < r.end) {
            match merged.last_mut() {
                Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
                _ => merged.push(r),
            }
        }
        Footprint { ranges: merged }
    }

    pub fn of_run(data: &BTreeMap<u64, i64>, stores: &[StoreRecord]) -> Self {
        let mut ranges: Vec<Range<u64>> = data.keys().map(|&a| a..a + 8).collect();
        ranges.extend(stores.iter().map(|s| s.address..s.address + 8));
        ranges.push(STACK_LIMIT..STACK_TOP);
        Footprint::new(ranges)
    }

    pub fn ranges(&self) -> &[Range<u64>] {
        &self.ranges
    }

    pub fn contains(&self, addr: u64) -> bool {
        self.ranges.iter().any(|r| r.contains(&addr))
    }
}

/// Byte differences between two NVM images inside `footprint`.
pub fn compare_nvm_states(a: &[u8], b: &[u8], footprint: &Footprint) -> Vec<ByteDiff> {
    let mut out = Vec::new();
    for r in footprint.ranges() {
        for addr in r.clone() {
            let i = addr as usize;
            let (x, y) = (a.get(i).copied().unwrap_or(0), b.get(i).copied().unwrap_or(0));
            if x != y {
                out.push(ByteDiff { address: addr, a: x, b: y });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_is_footprint_scoped() {
        let fp = Footprint::new(vec![0..16, 8..24]);
        assert_eq!(fp.ranges(), &[0..24]);
        let a = vec![0u8; 64];
        assert!(compare_nvm_states(&a, &a, &fp).is_empty());
        let mut b = a.clone();
        b[5] = 9;
        assert_eq!(compare_nvm_states(&a, &b, &fp), vec![ByteDiff { address: 5, a: 0, b: 9 }]);
        let mut c = a.clone();
        c[40] = 1;
        assert!(compare_nvm_states(&a, &c, &fp).is_empty());
    }
}
