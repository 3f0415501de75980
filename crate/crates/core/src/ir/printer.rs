// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write;

use super::{Callee, Function, Instr, Program, Terminator, VarDecl, VarRef};

fn decl(d: &VarDecl) -> String {
    match &d.fields {
        None => d.name.clone(),
        Some(fs) => format!("{} {{ {} }}", d.name, fs.join(", ")),
    }
}

fn instr(p: &Program, f: &Function, ins: &Instr) -> String {
    let r = |i: usize| f.registers[i].as_str();
    let list = |xs: &[usize]| xs.iter().map(|&x| r(x)).collect::<Vec<_>>().join(", ");
    match ins {
        Instr::Lock(l) => format!("lock {};", p.locks[*l]),
        Instr::Unlock(l) => format!("unlock {};", p.locks[*l]),
        Instr::Call { dst, callee, args } => {
            let target = match callee {
                Callee::Func(g) => p.functions[*g].name.clone(),
                Callee::Extern(e) => p.externs[*e].clone(),
                Callee::Dynamic(reg) => format!("*{}", r(*reg)),
            };
            let lhs = dst.map(|d| format!("{} = ", r(d))).unwrap_or_default();
            format!("{lhs}call {target}({});", list(args))
        }
        Instr::Compute { dst, srcs } => format!("{} = op({});", r(*dst), list(srcs)),
        Instr::Create(g) => format!("create {};", p.functions[*g].name),
        Instr::Read { dst, addr } => format!("{} = read *{};", r(*dst), r(*addr)),
        Instr::Write { addr, src } => format!("write *{}, {};", r(*addr), r(*src)),
        Instr::AddrOf { dst, var, field } => {
            let d = match var {
                VarRef::Global(g) => &p.globals[*g],
                VarRef::Local(l) => &f.locals[*l],
            };
            match field {
                None => format!("{} = &{};", r(*dst), d.name),
                Some(k) => format!("{} = &{}.{};", r(*dst), d.name, d.fields.as_ref().unwrap()[*k]),
            }
        }
        Instr::AddrOfFunc { dst, func } => format!("{} = &&{};", r(*dst), p.functions[*func].name),
    }
}

/// Render a program back to source text. Parsing the output yields an
/// identical program.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for g in &p.globals {
        let _ = writeln!(out, "global {};", decl(g));
    }
    if !p.locks.is_empty() {
        let _ = writeln!(out, "lock {};", p.locks.join(", "));
    }
    if !p.externs.is_empty() {
        let _ = writeln!(out, "extern {};", p.externs.join(", "));
    }
    for f in &p.functions {
        if !out.is_empty() {
            out.push('\n');
        }
        let formals: Vec<&str> = f.formals.iter().map(|&i| f.registers[i].as_str()).collect();
        let _ = writeln!(out, "fn {}({}) {{", f.name, formals.join(", "));
        let others = &f.registers[f.formals.len()..];
        if !others.is_empty() {
            let _ = writeln!(out, "  regs {};", others.join(", "));
        }
        if !f.locals.is_empty() {
            let ls: Vec<String> = f.locals.iter().map(decl).collect();
            let _ = writeln!(out, "  locals {};", ls.join(", "));
        }
        for b in &f.blocks {
            let _ = writeln!(out, "  {}:", b.label);
            for ins in &b.instrs {
                let _ = writeln!(out, "    {}", instr(p, f, ins));
            }
            let label = |t: usize| f.blocks[t].label.as_str();
            let term = match &b.term {
                Terminator::Goto(t) => format!("goto {};", label(*t)),
                Terminator::Branch { guard, targets } => {
                    let ts: Vec<&str> = targets.iter().map(|&t| label(t)).collect();
                    if guard.is_empty() {
                        format!("branch {};", ts.join(" "))
                    } else {
                        format!("branch [{guard}] {};", ts.join(" "))
                    }
                }
                Terminator::Return(None) => "return;".to_string(),
                Terminator::Return(Some(r)) => format!("return {};", f.registers[*r]),
            };
            let _ = writeln!(out, "    {term}");
        }
        out.push_str("}\n");
    }
    out
}
