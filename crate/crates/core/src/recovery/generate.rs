use std::collections::BTreeMap;

use crate::isa::{
    layout::assign_pcs, BasicBlock, Cond, FlatFunction, Function, Inst, Instruction, Program, Reg, RegFile,
    AluOp, WORD_BYTES,
};
use crate::compiler::RegionBoundarySet;
use crate::memory::CheckpointKind;

use super::{RecoveryBlock, RecoveryError, RecoveryMetadata, Region, SCTable};

pub(crate) struct StoreSite {
    pub pc: u64,
    pub rv: Reg,
    pub base: Reg,
    pub off: i64,
}

pub(crate) struct RegionInfo {
    pub region: Region,
    pub stores: Vec<StoreSite>,
}

pub(crate) fn region_infos(program: &Program) -> Result<Vec<RegionInfo>, RecoveryError> {
    let mut out = Vec::new();
    for fi in program.layout_order() {
        let flat = FlatFunction::new(&program.functions[fi]);
        if flat.is_empty() {
            continue;
        }
        let bounds: Vec<usize> = (0..flat.len()).filter(|&i| flat.inst(i).is_boundary()).collect();
        if bounds.first() != Some(&0) {
            return Err(RecoveryError::UncoveredCode { pc: flat.pc(0) });
        }
        for (k, &b) in bounds.iter().enumerate() {
            let end = bounds.get(k + 1).map_or(flat.len() - 1, |&n| n - 1);
            let start_pc = flat.pc(b);
            for j in b + 1..=end {
                if flat.preds[j] != [j - 1] || flat.succs[j - 1] != [j] {
                    return Err(RecoveryError::NonStraightLineRegion { start_pc, pc: flat.pc(j) });
                }
            }
            let stores = (b..=end)
                .filter_map(|j| match *flat.inst(j) {
                    Inst::St { rv, base, off } => Some(StoreSite { pc: flat.pc(j), rv, base, off }),
                    _ => None,
                })
                .collect();
            out.push(RegionInfo { region: Region { start_pc, end_pc: flat.pc(end) }, stores });
        }
    }
    out.sort_by_key(|r| r.region.start_pc);
    Ok(out)
}

/// Regions of a compiled, laid-out program in PC order.
pub fn compute_regions(program: &Program) -> Result<Vec<Region>, RecoveryError> {
    Ok(region_infos(program)?.into_iter().map(|r| r.region).collect())
}

fn block(label: &str, insts: Vec<Inst>, fallthrough: Option<&str>) -> BasicBlock {
    BasicBlock {
        label: label.to_string(),
        insts: insts.into_iter().map(Instruction::new).collect(),
        fallthrough: fallthrough.map(str::to_string),
    }
}

fn phys(r: Reg) -> Result<u8, RecoveryError> {
    match r {
        Reg::Phys(p) => Ok(p),
        Reg::Virt(v) => Err(RecoveryError::Config(format!("virtual register v{v} in compiled code"))),
    }
}

/// The replay routine for one region. On entry the region register holds
/// the number of stores to replay; each group reloads the store's operand
/// registers from the checkpoint, re-executes it, and exits once the count
/// is used up.
fn recovery_function(
    start_pc: u64,
    stores: &[StoreSite],
    kind: CheckpointKind,
    rf: RegFile,
) -> Result<Function, RecoveryError> {
    let name = format!("__rcv_{start_pc:x}");
    if stores.is_empty() {
        return Ok(Function { name, blocks: vec![block("pre", vec![Inst::Halt], None)] });
    }
    let (one, base, count) = (rf.lr(), rf.sp(), rf.region());
    let (t0, t1) = (Reg::Phys(0), Reg::Phys(1));
    let exit = "zexit".to_string();
    let labels: Vec<(String, String)> =
        (0..stores.len()).map(|i| (format!("g{i:05}a"), format!("g{i:05}b"))).collect();
    let mut blocks = vec![block(
        "pre",
        vec![
            Inst::Li { rd: one, imm: 1 },
            Inst::Li { rd: base, imm: kind.base() as i64 },
            Inst::Li { rd: t0, imm: 0 },
            Inst::Br { cond: Cond::Eq, ra: count, rb: t0, target: exit.clone() },
        ],
        Some(&labels[0].0),
    )];
    let slot = |r: Reg| phys(r).map(|p| (p as u64 * WORD_BYTES) as i64);
    for (i, s) in stores.iter().enumerate() {
        let next = labels.get(i + 1).map_or(exit.as_str(), |l| l.0.as_str());
        blocks.push(block(
            &labels[i].0,
            vec![
                Inst::Ld { rd: t0, base, off: slot(s.rv)? },
                Inst::Ld { rd: t1, base, off: slot(s.base)? },
                Inst::St { rv: t0, base: t1, off: s.off },
                Inst::Br { cond: Cond::Eq, ra: count, rb: one, target: exit.clone() },
            ],
            Some(&labels[i].1),
        ));
        blocks.push(block(
            &labels[i].1,
            vec![Inst::Alu { op: AluOp::Sub, rd: count, ra: count, rb: one }],
            Some(next),
        ));
    }
    blocks.push(block(&exit, vec![Inst::Halt], None));
    Ok(Function { name, blocks })
}

/// Builds RM, CM and one recovery block per region. Recovery code is placed
/// right above the application code.
pub fn generate_recovery(
    program: &Program,
    boundaries: &RegionBoundarySet,
    kind: CheckpointKind,
    rf: RegFile,
) -> Result<RecoveryMetadata, RecoveryError> {
    let infos = region_infos(program)?;
    debug_assert!(infos.iter().all(|r| boundaries.contains(r.region.start_pc)));
    let code_base = program.code_end();
    let mut addr = code_base;
    let mut rm = BTreeMap::new();
    let mut cm = BTreeMap::new();
    let mut blocks = Vec::new();
    for info in &infos {
        let start = info.region.start_pc;
        let mut function = recovery_function(start, &info.stores, kind, rf)?;
        let next = assign_pcs(&mut function, addr);
        rm.insert(start, addr);
        let pcs: Vec<u64> = info.stores.iter().map(|s| s.pc).collect();
        cm.insert(start, SCTable::from_store_pcs(&pcs));
        blocks.push(RecoveryBlock { region_start_pc: start, address: addr, kind, function });
        addr = next;
    }
    Ok(RecoveryMetadata {
        kind,
        k: rf.k,
        code_base,
        regions: infos.iter().map(|r| r.region).collect(),
        rm,
        cm,
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{linearize, parse_assembly};

    const TWO_STORES: &str = "fn main {\ne:\n rboundary\n li r1, 64\n li r2, 1\n st r2 -> [r1+0]\n clwb [r1+0]\n st r2 -> [r1+8]\n clwb [r1+8]\n rboundary\n halt\n}";

    fn meta(src: &str) -> RecoveryMetadata {
        let p = linearize(&parse_assembly(src).unwrap());
        let b = RegionBoundarySet::from_program(&p);
        generate_recovery(&p, &b, CheckpointKind::Nvp, RegFile::default()).unwrap()
    }

    #[test]
    fn two_store_groups_and_trivial_block() {
        let m = meta(TWO_STORES);
        assert_eq!(m.regions, vec![Region { start_pc: 0, end_pc: 24 }, Region { start_pc: 28, end_pc: 32 }]);
        assert_eq!(m.blocks[0].groups(), 2);
        assert_eq!(m.blocks[0].address, 36);
        let texts: Vec<String> = m.blocks[0].function.instructions().map(|i| i.inst.to_string()).collect();
        assert_eq!(texts[4], "ld [r13+16] -> r0");
        assert_eq!(texts[5], "ld [r13+8] -> r1");
        assert_eq!(texts[6], "st r0 -> [r1+0]");
        assert_eq!(m.blocks[1].function.instruction_count(), 1);
        assert_eq!(m.cm[&0].entries.iter().map(|e| e.store_pc).collect::<Vec<_>>(), [12, 20]);
        assert_eq!(m.rm[&28], m.blocks[1].address);
    }

    #[test]
    fn merge_inside_region_is_rejected() {
        let src = "fn main {\ne:\n rboundary\n li r1, 1\n beq r1, r1, b\na:\n jmp b\nb:\n halt\n}";
        let p = linearize(&parse_assembly(src).unwrap());
        let err = compute_regions(&p).unwrap_err();
        assert!(matches!(err, RecoveryError::NonStraightLineRegion { start_pc: 0, .. }));
    }
}
