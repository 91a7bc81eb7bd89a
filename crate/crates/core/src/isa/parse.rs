use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use super::{AluOp, BasicBlock, BoundaryOrigin, Cond, Function, Inst, Instruction, Program, Reg};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: syntax error: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown opcode `{op}`")]
    UnknownOpcode { line: usize, op: String },
    #[error("line {line}: unresolved label `{label}`")]
    UnresolvedLabel { line: usize, label: String },
}

fn syntax(line: usize, reason: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, reason: reason.into() }
}

struct PendingRef {
    line: usize,
    func: usize,
    label: String,
    is_call: bool,
}

/// Parses the textual assembly form into a [`Program`].
///
/// ```text
/// data 0x100 = 1, 2, 3
/// fn main {
/// entry:
///   li v1, 0x100
///   ld [v1+8] -> v2
///   st v2 -> [v1+0]
///   halt
/// }
/// ```
///
/// Several items may share a line (`fn main { entry: li r1, 5`). A block
/// without a terminator falls through to the next declared block.
pub fn parse_assembly(text: &str) -> Result<Program, ParseError> {
    let mut program = Program::default();
    let mut explicit_entry: Option<String> = None;
    let mut current: Option<Function> = None;
    let mut refs: Vec<PendingRef> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut rest = raw.split('#').next().unwrap_or("").trim();

        while !rest.is_empty() {
            if current.is_none() {
                if let Some(r) = rest.strip_prefix("fn ") {
                    let (name, after) = r
                        .split_once('{')
                        .ok_or_else(|| syntax(line, "expected `{` after function name"))?;
                    let name = name.trim();
                    if !is_ident(name) {
                        return Err(syntax(line, format!("bad function name `{name}`")));
                    }
                    if program.function(name).is_some() {
                        return Err(syntax(line, format!("duplicate function `{name}`")));
                    }
                    current = Some(Function { name: name.to_string(), blocks: vec![] });
                    rest = after.trim();
                    continue;
                }
                if let Some(r) = rest.strip_prefix("entry ") {
                    explicit_entry = Some(r.trim().to_string());
                    break;
                }
                if let Some(r) = rest.strip_prefix("data ") {
                    parse_data(line, r, &mut program.data)?;
                    break;
                }
                return Err(syntax(line, format!("unexpected `{rest}` outside a function")));
            }

            let func = current.as_mut().expect("inside function");
            if let Some(r) = rest.strip_prefix('}') {
                let f = current.take().expect("inside function");
                if f.blocks.is_empty() {
                    return Err(syntax(line, format!("function `{}` has no blocks", f.name)));
                }
                program.functions.push(f);
                rest = r.trim();
                continue;
            }
            if let Some((label, after)) = split_label(rest) {
                if func.blocks.iter().any(|b| b.label == label) {
                    return Err(syntax(line, format!("duplicate label `{label}`")));
                }
                func.blocks.push(BasicBlock::new(label));
                rest = after.trim();
                continue;
            }
            let (inst_text, after) = match rest.find('}') {
                Some(p) => (&rest[..p], &rest[p..]),
                None => (rest, ""),
            };
            let inst = parse_inst(line, inst_text.trim())?;
            let block = func
                .blocks
                .last_mut()
                .ok_or_else(|| syntax(line, "instruction before the first label"))?;
            match &inst {
                Inst::Br { target, .. } | Inst::Jmp { target } => refs.push(PendingRef {
                    line,
                    func: program.functions.len(),
                    label: target.clone(),
                    is_call: false,
                }),
                Inst::Call { callee } => refs.push(PendingRef {
                    line,
                    func: program.functions.len(),
                    label: callee.clone(),
                    is_call: true,
                }),
                _ => {}
            }
            block.insts.push(Instruction::new(inst));
            rest = after.trim();
        }
    }
    if let Some(f) = current {
        return Err(syntax(text.lines().count(), format!("function `{}` is not closed", f.name)));
    }

    for func in &mut program.functions {
        let labels: Vec<String> = func.blocks.iter().map(|b| b.label.clone()).collect();
        for (i, b) in func.blocks.iter_mut().enumerate() {
            b.fallthrough = labels.get(i + 1).cloned();
        }
    }

    let fn_names: HashSet<&str> = program.functions.iter().map(|f| f.name.as_str()).collect();
    for r in &refs {
        let ok = if r.is_call {
            fn_names.contains(r.label.as_str())
        } else {
            program.functions[r.func].block(&r.label).is_some()
        };
        if !ok {
            return Err(ParseError::UnresolvedLabel { line: r.line, label: r.label.clone() });
        }
    }

    program.entry = match explicit_entry {
        Some(e) => {
            if !fn_names.contains(e.as_str()) {
                return Err(ParseError::UnresolvedLabel { line: 0, label: e });
            }
            e
        }
        None if fn_names.contains("main") => "main".to_string(),
        None => program
            .functions
            .first()
            .map(|f| f.name.clone())
            .ok_or_else(|| syntax(0, "program has no functions"))?,
    };
    Ok(program)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn split_label(s: &str) -> Option<(&str, &str)> {
    let colon = s.find(':')?;
    let label = &s[..colon];
    if is_ident(label) {
        Some((label, &s[colon + 1..]))
    } else {
        None
    }
}

fn parse_data(line: usize, s: &str, data: &mut BTreeMap<u64, i64>) -> Result<(), ParseError> {
    let (addr, values) =
        s.split_once('=').ok_or_else(|| syntax(line, "expected `data ADDR = W, ...`"))?;
    let addr = parse_imm(line, addr.trim())?;
    if addr < 0 || addr % 8 != 0 {
        return Err(syntax(line, "data address must be non-negative and 8-byte aligned"));
    }
    for (i, v) in values.split(',').enumerate() {
        let v = parse_imm(line, v.trim())?;
        data.insert(addr as u64 + 8 * i as u64, v);
    }
    Ok(())
}

fn parse_imm(line: usize, s: &str) -> Result<i64, ParseError> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let mag = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()
    } else {
        body.parse::<u64>().ok()
    }
    .ok_or_else(|| syntax(line, format!("bad immediate `{s}`")))?;
    let v = mag as i64;
    Ok(if neg { v.wrapping_neg() } else { v })
}

fn parse_reg(line: usize, s: &str) -> Result<Reg, ParseError> {
    let s = s.trim();
    let bad = || syntax(line, format!("bad register `{s}`"));
    if let Some(n) = s.strip_prefix('v') {
        n.parse().map(Reg::Virt).map_err(|_| bad())
    } else if let Some(n) = s.strip_prefix('r') {
        n.parse().map(Reg::Phys).map_err(|_| bad())
    } else {
        Err(bad())
    }
}

/// `[rA+IMM]`, `[rA-IMM]` or `[rA]`.
fn parse_mem(line: usize, s: &str) -> Result<(Reg, i64), ParseError> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| syntax(line, format!("bad memory operand `{s}`")))?;
    if let Some(p) = inner.find(['+', '-']) {
        let base = parse_reg(line, &inner[..p])?;
        let off = parse_imm(line, inner[p..].trim())?;
        Ok((base, off))
    } else {
        Ok((parse_reg(line, inner)?, 0))
    }
}

fn operands(s: &str) -> Vec<&str> {
    if s.trim().is_empty() {
        vec![]
    } else {
        s.split(',').map(str::trim).collect()
    }
}

fn expect_n<'a>(line: usize, op: &str, ops: &'a [&'a str], n: usize) -> Result<&'a [&'a str], ParseError> {
    if ops.len() != n {
        return Err(syntax(line, format!("`{op}` takes {n} operand(s), got {}", ops.len())));
    }
    Ok(ops)
}

fn parse_inst(line: usize, s: &str) -> Result<Inst, ParseError> {
    let (op, rest) = match s.find(char::is_whitespace) {
        Some(p) => (&s[..p], s[p..].trim()),
        None => (s, ""),
    };
    let inst = match op {
        "li" => {
            let o = operands(rest);
            let o = expect_n(line, op, &o, 2)?;
            Inst::Li { rd: parse_reg(line, o[0])?, imm: parse_imm(line, o[1])? }
        }
        "mov" => {
            let o = operands(rest);
            let o = expect_n(line, op, &o, 2)?;
            Inst::Mov { rd: parse_reg(line, o[0])?, rs: parse_reg(line, o[1])? }
        }
        "add" | "sub" | "mul" | "shl" => {
            let alu = match op {
                "add" => AluOp::Add,
                "sub" => AluOp::Sub,
                "mul" => AluOp::Mul,
                _ => AluOp::Shl,
            };
            let o = operands(rest);
            let o = expect_n(line, op, &o, 3)?;
            Inst::Alu {
                op: alu,
                rd: parse_reg(line, o[0])?,
                ra: parse_reg(line, o[1])?,
                rb: parse_reg(line, o[2])?,
            }
        }
        "ld" => {
            let (mem, rd) =
                rest.split_once("->").ok_or_else(|| syntax(line, "expected `ld [rA+IMM] -> rD`"))?;
            let (base, off) = parse_mem(line, mem)?;
            Inst::Ld { rd: parse_reg(line, rd)?, base, off }
        }
        "st" => {
            let (rv, mem) =
                rest.split_once("->").ok_or_else(|| syntax(line, "expected `st rV -> [rA+IMM]`"))?;
            let (base, off) = parse_mem(line, mem)?;
            Inst::St { rv: parse_reg(line, rv)?, base, off }
        }
        "clwb" => {
            let (base, off) = parse_mem(line, rest)?;
            Inst::Clwb { base, off }
        }
        "beq" | "bne" | "blt" => {
            let cond = match op {
                "beq" => Cond::Eq,
                "bne" => Cond::Ne,
                _ => Cond::Lt,
            };
            let o = operands(rest);
            let o = expect_n(line, op, &o, 3)?;
            if !is_ident(o[2]) {
                return Err(syntax(line, format!("bad label `{}`", o[2])));
            }
            Inst::Br {
                cond,
                ra: parse_reg(line, o[0])?,
                rb: parse_reg(line, o[1])?,
                target: o[2].to_string(),
            }
        }
        "jmp" | "call" => {
            if !is_ident(rest) {
                return Err(syntax(line, format!("bad target `{rest}`")));
            }
            if op == "jmp" {
                Inst::Jmp { target: rest.to_string() }
            } else {
                Inst::Call { callee: rest.to_string() }
            }
        }
        "ret" | "halt" => {
            if !rest.is_empty() {
                return Err(syntax(line, format!("`{op}` takes no operands")));
            }
            if op == "ret" {
                Inst::Ret
            } else {
                Inst::Halt
            }
        }
        "rboundary" => {
            if rest.is_empty() {
                Inst::Boundary(None)
            } else {
                let origin = BoundaryOrigin::from_tag(rest)
                    .ok_or_else(|| syntax(line, format!("unknown boundary origin `{rest}`")))?;
                Inst::Boundary(Some(origin))
            }
        }
        other => return Err(ParseError::UnknownOpcode { line, op: other.to_string() }),
    };
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse_assembly("fn main { entry: li r1, 5 \n halt }").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.functions[0].instruction_count(), 2);
        assert_eq!(p.entry, "main");
    }

    #[test]
    fn store_operands() {
        let p = parse_assembly("fn main {\nentry:\n st r1 -> [r2+4]\n halt\n}").unwrap();
        assert_eq!(
            p.functions[0].blocks[0].insts[0].inst,
            Inst::St { rv: Reg::Phys(1), base: Reg::Phys(2), off: 4 }
        );
    }

    #[test]
    fn negative_offsets_and_hex() {
        let p = parse_assembly("fn main {\ne:\n ld [v3-16] -> v1\n li v2, 0x10\n halt\n}").unwrap();
        let b = &p.functions[0].blocks[0];
        assert_eq!(b.insts[0].inst, Inst::Ld { rd: Reg::Virt(1), base: Reg::Virt(3), off: -16 });
        assert_eq!(b.insts[1].inst, Inst::Li { rd: Reg::Virt(2), imm: 16 });
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_assembly("fn main {\ne:\n frob r1\n}"),
            Err(ParseError::UnknownOpcode { line: 3, .. })
        ));
        assert!(matches!(
            parse_assembly("fn main {\ne:\n jmp nowhere\n}"),
            Err(ParseError::UnresolvedLabel { line: 3, .. })
        ));
        assert!(matches!(
            parse_assembly("fn main {\ne:\n call ghost\n halt\n}"),
            Err(ParseError::UnresolvedLabel { .. })
        ));
        assert!(matches!(parse_assembly("fn main {\ne:\n li r1\n}"), Err(ParseError::Syntax { line: 3, .. })));
        assert!(matches!(parse_assembly("fn main {\n li r1, 2\n}"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_assembly("fn main {\ne:\n halt\n"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn fallthrough_follows_declaration_order() {
        let p = parse_assembly("fn main {\na:\n li v1, 1\nb:\n halt\n}").unwrap();
        assert_eq!(p.functions[0].blocks[0].fallthrough.as_deref(), Some("b"));
        assert_eq!(p.functions[0].blocks[1].fallthrough, None);
    }

    #[test]
    fn data_and_boundary_tags() {
        let p = parse_assembly("data 0x40 = 1, -2\nfn main {\ne:\n rboundary pressure\n rboundary\n halt\n}")
            .unwrap();
        assert_eq!(p.data.get(&0x40), Some(&1));
        assert_eq!(p.data.get(&0x48), Some(&-2));
        let b = &p.functions[0].blocks[0];
        assert_eq!(b.insts[0].inst, Inst::Boundary(Some(BoundaryOrigin::Pressure)));
        assert_eq!(b.insts[1].inst, Inst::Boundary(None));
    }
}
