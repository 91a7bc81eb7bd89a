use serde::Serialize;

use crate::compiler::CompiledProgram;
use crate::isa::{Inst, INST_BYTES, WORD_BYTES};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionStat {
    pub start_pc: u64,
    /// Instructions in the region, not counting its boundary.
    pub instructions: usize,
    pub stores: usize,
    /// Instructions after the region's last store; `None` without stores.
    pub last_store_distance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionStats {
    pub regions: Vec<RegionStat>,
    pub mean_instructions: f64,
    pub mean_stores: f64,
    /// Over regions with at least one store.
    pub mean_last_store_distance: Option<f64>,
    pub app_bytes: u64,
    pub recovery_code_bytes: u64,
    pub metadata_bytes: u64,
    /// Recovery code and tables relative to application code, in percent.
    pub binary_overhead_pct: f64,
}

/// Statistics for one region given its instructions in layout order.
pub fn region_stat(start_pc: u64, insts: &[&Inst]) -> RegionStat {
    let body: Vec<&&Inst> = insts.iter().filter(|i| !i.is_boundary()).collect();
    let stores = body.iter().filter(|i| i.is_store()).count();
    let last_store_distance = body.iter().rposition(|i| i.is_store()).map(|p| body.len() - 1 - p);
    RegionStat { start_pc, instructions: body.len(), stores, last_store_distance }
}

fn mean(xs: impl Iterator<Item = usize>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0usize), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s as f64 / n as f64)
}

pub fn aggregate(regions: Vec<RegionStat>, app_bytes: u64, recovery_code_bytes: u64, metadata_bytes: u64) -> RegionStats {
    let overhead = if app_bytes == 0 {
        0.0
    } else {
        (recovery_code_bytes + metadata_bytes) as f64 / app_bytes as f64 * 100.0
    };
    RegionStats {
        mean_instructions: mean(regions.iter().map(|r| r.instructions)).unwrap_or(0.0),
        mean_stores: mean(regions.iter().map(|r| r.stores)).unwrap_or(0.0),
        mean_last_store_distance: mean(regions.iter().filter_map(|r| r.last_store_distance)),
        regions,
        app_bytes,
        recovery_code_bytes,
        metadata_bytes,
        binary_overhead_pct: overhead,
    }
}

/// Region statistics of a compiled program. Tables are sized as two words
/// per RM entry and two words per SC entry.
pub fn cmd_stats(c: &CompiledProgram) -> RegionStats {
    let insts: Vec<(u64, &Inst)> = c.program.functions.iter().flat_map(|f| f.instructions()).map(|i| (i.pc, &i.inst)).collect();
    let regions = c
        .metadata
        .regions
        .iter()
        .map(|r| {
            let body: Vec<&Inst> =
                insts.iter().filter(|(pc, _)| (r.start_pc..=r.end_pc).contains(pc)).map(|(_, i)| *i).collect();
            region_stat(r.start_pc, &body)
        })
        .collect();
    let app_bytes = insts.iter().filter(|(pc, _)| *pc < c.metadata.code_base).count() as u64 * INST_BYTES;
    let recovery = c.metadata.code_len() as u64 * INST_BYTES;
    let sc: usize = c.metadata.cm.values().map(|t| t.len()).sum();
    let meta = (c.metadata.rm.len() + sc) as u64 * 2 * WORD_BYTES;
    aggregate(regions, app_bytes, recovery, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{AluOp, Reg};

    fn alu() -> Inst {
        Inst::Alu { op: AluOp::Add, rd: Reg::Phys(0), ra: Reg::Phys(0), rb: Reg::Phys(0) }
    }

    fn st() -> Inst {
        Inst::St { rv: Reg::Phys(0), base: Reg::Phys(1), off: 0 }
    }

    #[test]
    fn single_region_means() {
        let mut v = vec![Inst::Boundary(None)];
        v.extend([alu(), st(), alu(), alu(), alu(), alu(), st(), alu(), alu(), alu()]);
        let refs: Vec<&Inst> = v.iter().collect();
        let s = aggregate(vec![region_stat(0, &refs)], 40, 0, 0);
        assert_eq!((s.mean_instructions, s.mean_stores, s.mean_last_store_distance), (10.0, 2.0, Some(3.0)));
    }

    #[test]
    fn storeless_region_excluded_from_distance() {
        let a = [alu(), st(), alu(), alu(), alu()];
        let b = [alu(), alu()];
        let s = aggregate(
            vec![region_stat(0, &a.iter().collect::<Vec<_>>()), region_stat(20, &b.iter().collect::<Vec<_>>())],
            28,
            0,
            0,
        );
        assert_eq!(s.regions[1].last_store_distance, None);
        assert_eq!(s.mean_last_store_distance, Some(3.0));
    }
}
