//! Walks one function through partitioning, store-operand extension,
//! allocation with two value registers, and the spill-store fix-up.

use replaycache::compiler::{
    compute_live_intervals, lower_function, partition_regions, preserve_store_registers, CompileOptions,
    PartitionOptions,
};
use replaycache::isa::{linearize, parse_assembly, RegFile};

const SRC: &str = "fn main {
A:
  li v1, 0x100      # x
  li v2, 5          # y
  beq v2, v1, C
B:
  st v2 -> [v1+0]
  jmp D
C:
  st v2 -> [v1+8]
D:
  li v3, 0x200      # z
  li v4, 2
  li v5, 7
  shl v4, v4, v4
  add v6, v3, v4
  add v6, v6, v5
  st v6 -> [v3+0]
  halt
}";

fn main() -> anyhow::Result<()> {
    let p = linearize(&parse_assembly(SRC)?);
    let f = &p.functions[0];
    let rf = RegFile::default();
    let opts = PartitionOptions { cut_at_merges: false };

    let iv = compute_live_intervals(f, rf)?;
    for i in &iv {
        println!("v{}: [{:#x}, {:#x}] store={} branch={}", i.vreg, i.start, i.end, i.is_store_operand, i.is_branch_operand);
    }

    let part = partition_regions(f, &iv, 2, opts);
    println!("\nthreshold 2:\n{}", part.function);

    let ext = preserve_store_registers(&part.function, &part.boundaries, &compute_live_intervals(&part.function, rf)?);
    for i in ext.iter().filter(|i| i.extended_end.is_some()) {
        println!("v{} extended to {:#x}", i.vreg, i.extended_end.unwrap());
    }

    let lowered = lower_function(f, &CompileOptions { regfile: RegFile::new(5), partition: opts, ..Default::default() })?;
    println!("\nwith five registers:\n{}", lowered.function);
    for s in &lowered.allocation.spills {
        println!("v{} spilled to [sp+{}]", s.vreg, s.offset);
    }
    Ok(())
}
