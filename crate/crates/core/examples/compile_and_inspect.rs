//! Compiles a program and shows the regions, recovery blocks and metadata.
//!
//!     cargo run --example compile_and_inspect [path.s]

use replaycache::compiler::{compile, CompileOptions};
use replaycache::corpus;
use replaycache::isa::{parse_assembly, BoundaryOrigin};
use replaycache::recovery::write_metadata;

fn main() -> anyhow::Result<()> {
    let program = match std::env::args().nth(1) {
        Some(path) => parse_assembly(&std::fs::read_to_string(path)?)?,
        None => corpus::program("nested_calls"),
    };
    let c = compile(&program, &CompileOptions::default())?;
    println!("{}", c.program);

    println!("{} regions", c.boundaries.len());
    for o in BoundaryOrigin::ALL {
        let n = c.boundaries.count(o);
        if n > 0 {
            println!("  {:>3} from {}", n, o.tag());
        }
    }
    for (name, a) in &c.allocations {
        println!("{name}: {} values in registers, {} spilled", a.assignment.len(), a.spills.len());
    }

    let b = &c.metadata.blocks[0];
    println!("\nrecovery block for region {:#x} at {:#x}:\n{}", b.region_start_pc, b.address, b.function);
    println!("{}", write_metadata(&c.metadata).lines().take(12).collect::<Vec<_>>().join("\n"));
    Ok(())
}
