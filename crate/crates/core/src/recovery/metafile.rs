use std::collections::BTreeMap;
use std::fmt::Write;

use crate::isa::{layout::assign_pcs, parse_assembly};
use crate::memory::CheckpointKind;

use super::{RecoveryBlock, RecoveryError, RecoveryMetadata, Region, SCTable, ScEntry};

pub const METADATA_HEADER: &str = "RPCMETA v1";

/// Text form of the recovery metadata. Identical metadata always produces
/// identical text.
pub fn write_metadata(meta: &RecoveryMetadata) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{METADATA_HEADER}");
    let _ = writeln!(s, "kind {}", meta.kind.name());
    let _ = writeln!(s, "k {}", meta.k);
    let _ = writeln!(s, "code_base {:#x}", meta.code_base);
    for r in &meta.regions {
        let _ = writeln!(s, "region {:#x} {:#x}", r.start_pc, r.end_pc);
    }
    for (start, addr) in &meta.rm {
        let _ = writeln!(s, "rm {start:#x} {addr:#x}");
    }
    for (start, sc) in &meta.cm {
        let _ = write!(s, "sc {start:#x}");
        for e in &sc.entries {
            let _ = write!(s, " {:#x}:{}", e.store_pc, e.count);
        }
        s.push('\n');
    }
    s.push_str("recovery\n");
    for b in &meta.blocks {
        let _ = write!(s, "{}", b.function);
    }
    s.push_str("end\n");
    s
}

fn num(line: usize, t: &str) -> Result<u64, RecoveryError> {
    let r = match t.strip_prefix("0x") {
        Some(h) => u64::from_str_radix(h, 16),
        None => t.parse(),
    };
    r.map_err(|_| RecoveryError::Metadata { line, reason: format!("bad number `{t}`") })
}

pub fn parse_metadata(text: &str) -> Result<RecoveryMetadata, RecoveryError> {
    let bad = |line: usize, reason: &str| RecoveryError::Metadata { line, reason: reason.to_string() };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, h)) if h == METADATA_HEADER => {}
        _ => return Err(bad(1, "missing RPCMETA v1 header")),
    }
    let mut kind = None;
    let mut k = None;
    let mut code_base = None;
    let mut regions = Vec::new();
    let mut rm = BTreeMap::new();
    let mut cm = BTreeMap::new();
    let mut code = String::new();
    let mut code_line = 0;
    let mut in_code = false;
    let mut ended = false;
    for (n, line) in lines {
        if in_code {
            if line == "end" {
                ended = true;
                break;
            }
            code.push_str(line);
            code.push('\n');
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["kind", v] => kind = Some(CheckpointKind::from_name(v).ok_or_else(|| bad(n, "unknown kind"))?),
            ["k", v] => k = Some(u8::try_from(num(n, v)?).map_err(|_| bad(n, "k out of range"))?),
            ["code_base", v] => code_base = Some(num(n, v)?),
            ["region", a, b] => regions.push(Region { start_pc: num(n, a)?, end_pc: num(n, b)? }),
            ["rm", a, b] => {
                rm.insert(num(n, a)?, num(n, b)?);
            }
            ["sc", start, rest @ ..] => {
                let mut entries = Vec::new();
                for e in rest {
                    let (pc, c) = e.split_once(':').ok_or_else(|| bad(n, "bad sc entry"))?;
                    let count = u32::try_from(num(n, c)?).map_err(|_| bad(n, "count out of range"))?;
                    entries.push(ScEntry { store_pc: num(n, pc)?, count });
                }
                cm.insert(num(n, start)?, SCTable { entries });
            }
            ["recovery"] => {
                in_code = true;
                code_line = n;
            }
            _ => return Err(bad(n, "unrecognized line")),
        }
    }
    if !ended {
        return Err(bad(code_line, "unterminated recovery section"));
    }
    let kind = kind.ok_or_else(|| bad(1, "missing kind"))?;
    let k = k.ok_or_else(|| bad(1, "missing k"))?;
    let code_base = code_base.ok_or_else(|| bad(1, "missing code_base"))?;
    let parsed = parse_assembly(&code).map_err(|e| bad(code_line, &e.to_string()))?;
    let mut blocks = Vec::new();
    for mut function in parsed.functions {
        let start = function
            .name
            .strip_prefix("__rcv_")
            .and_then(|h| u64::from_str_radix(h, 16).ok())
            .ok_or_else(|| bad(code_line, "recovery function name"))?;
        let address = *rm.get(&start).ok_or_else(|| bad(code_line, "recovery block missing from rm"))?;
        assign_pcs(&mut function, address);
        blocks.push(RecoveryBlock { region_start_pc: start, address, kind, function });
    }
    blocks.sort_by_key(|b| b.address);
    if rm.keys().ne(cm.keys()) || rm.keys().ne(regions.iter().map(|r| &r.start_pc)) {
        return Err(bad(1, "region table, rm and cm disagree"));
    }
    Ok(RecoveryMetadata { kind, k, code_base, regions, rm, cm, blocks })
}
