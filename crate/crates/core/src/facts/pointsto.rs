// SPDX-License-Identifier: Apache-2.0

//! Inclusion-based points-to analysis, flow- and context-insensitive, with
//! field-precise locations for aggregate variables.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{AccessId, Callee, FuncId, GlobalId, Instr, LocalId, Program, RegId, Terminator, VarRef};

/// Abstract memory location. Locals are merged over all activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbsLoc {
    Global { global: GlobalId, field: Option<usize> },
    Local { func: FuncId, local: LocalId, field: Option<usize> },
}

impl AbsLoc {
    pub fn field(&self) -> Option<usize> {
        match self {
            AbsLoc::Global { field, .. } | AbsLoc::Local { field, .. } => *field,
        }
    }

    pub fn is_global(&self) -> bool {
        matches!(self, AbsLoc::Global { .. })
    }

    /// The whole-variable location this one refines.
    pub fn base(&self) -> AbsLoc {
        match *self {
            AbsLoc::Global { global, .. } => AbsLoc::Global { global, field: None },
            AbsLoc::Local { func, local, .. } => AbsLoc::Local { func, local, field: None },
        }
    }

    pub fn render(&self, p: &Program) -> String {
        let (name, decl) = match *self {
            AbsLoc::Global { global, .. } => (p.globals[global].name.clone(), &p.globals[global]),
            AbsLoc::Local { func, local, .. } => {
                let f = &p.functions[func];
                (format!("{}::{}", f.name, f.locals[local].name), &f.locals[local])
            }
        };
        match self.field() {
            None => name,
            Some(k) => format!("{name}.{}", decl.fields.as_ref().unwrap()[k]),
        }
    }
}

/// Every abstract location of a program, in declaration order.
pub fn all_locations(p: &Program) -> Vec<AbsLoc> {
    let mut out = Vec::new();
    for (g, d) in p.globals.iter().enumerate() {
        out.push(AbsLoc::Global { global: g, field: None });
        for k in 0..d.field_count() {
            out.push(AbsLoc::Global { global: g, field: Some(k) });
        }
    }
    for (fi, f) in p.functions.iter().enumerate() {
        for (l, d) in f.locals.iter().enumerate() {
            out.push(AbsLoc::Local { func: fi, local: l, field: None });
            for k in 0..d.field_count() {
                out.push(AbsLoc::Local { func: fi, local: l, field: Some(k) });
            }
        }
    }
    out
}

/// Locations denoted by `&var` or `&var.field` inside function `func`.
pub fn addr_targets(p: &Program, func: FuncId, var: VarRef, field: Option<usize>) -> Vec<AbsLoc> {
    let mk = |fld| match var {
        VarRef::Global(global) => AbsLoc::Global { global, field: fld },
        VarRef::Local(local) => AbsLoc::Local { func, local, field: fld },
    };
    match field {
        Some(k) => vec![mk(Some(k))],
        None => {
            let n = p.var_decl(func, var).field_count();
            std::iter::once(mk(None)).chain((0..n).map(|k| mk(Some(k)))).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointsTo {
    pub reg_points_to: Vec<Vec<BTreeSet<AbsLoc>>>,
    pub locs: BTreeMap<AccessId, BTreeSet<AbsLoc>>,
    pub writes: BTreeMap<AbsLoc, BTreeSet<AccessId>>,
    /// Locations whose address may reach an extern function.
    pub extern_exposed: BTreeSet<AbsLoc>,
    /// Contents of each location: the locations whose address it may hold.
    pub contents: BTreeMap<AbsLoc, BTreeSet<AbsLoc>>,
}

impl PointsTo {
    pub fn locs_of(&self, a: AccessId) -> &BTreeSet<AbsLoc> {
        &self.locs[&a]
    }

    pub fn reg(&self, f: FuncId, r: RegId) -> &BTreeSet<AbsLoc> {
        &self.reg_points_to[f][r]
    }

    pub fn writes_to(&self, l: &AbsLoc) -> impl Iterator<Item = &AccessId> {
        self.writes.get(l).into_iter().flatten()
    }

    /// Accesses whose address register points nowhere. They cannot execute
    /// without faulting, and are reported as suspicious input.
    pub fn unresolved_accesses(&self) -> Vec<AccessId> {
        self.locs.iter().filter(|(_, s)| s.is_empty()).map(|(a, _)| *a).collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Node {
    Reg(FuncId, RegId),
    Ext,
}

enum Cons {
    Base(Node, Vec<AbsLoc>),
    Copy(Node, Node),
    Load(Node, Node),
    Store(Node, Node),
}

struct Solver {
    regs: Vec<Vec<BTreeSet<AbsLoc>>>,
    ext: BTreeSet<AbsLoc>,
    contents: BTreeMap<AbsLoc, BTreeSet<AbsLoc>>,
}

impl Solver {
    fn get(&self, n: Node) -> &BTreeSet<AbsLoc> {
        match n {
            Node::Reg(f, r) => &self.regs[f][r],
            Node::Ext => &self.ext,
        }
    }

    fn add(&mut self, n: Node, items: &BTreeSet<AbsLoc>) -> bool {
        let set = match n {
            Node::Reg(f, r) => &mut self.regs[f][r],
            Node::Ext => &mut self.ext,
        };
        let before = set.len();
        set.extend(items.iter().copied());
        set.len() != before
    }
}

pub fn compute_pointsto(p: &Program) -> PointsTo {
    let address_taken: BTreeSet<FuncId> = p
        .functions
        .iter()
        .flat_map(|f| f.instrs())
        .filter_map(|(_, _, ins)| match ins {
            Instr::AddrOfFunc { func, .. } => Some(*func),
            _ => None,
        })
        .collect();
    let returns: Vec<Vec<RegId>> = p
        .functions
        .iter()
        .map(|f| {
            f.blocks
                .iter()
                .filter_map(|b| match b.term {
                    Terminator::Return(Some(r)) => Some(r),
                    _ => None,
                })
                .collect()
        })
        .collect();

    let mut cons = Vec::new();
    let mut any_extern = false;
    let bind = |cons: &mut Vec<Cons>, caller: FuncId, g: FuncId, dst: &Option<RegId>, args: &[RegId]| {
        for (a, &formal) in args.iter().zip(&p.functions[g].formals) {
            cons.push(Cons::Copy(Node::Reg(caller, *a), Node::Reg(g, formal)));
        }
        if let Some(d) = dst {
            for &r in &returns[g] {
                cons.push(Cons::Copy(Node::Reg(g, r), Node::Reg(caller, *d)));
            }
        }
    };
    for (fi, f) in p.functions.iter().enumerate() {
        for (_, _, ins) in f.instrs() {
            let reg = |r: RegId| Node::Reg(fi, r);
            match ins {
                Instr::AddrOf { dst, var, field } => {
                    cons.push(Cons::Base(reg(*dst), addr_targets(p, fi, *var, *field)))
                }
                Instr::Compute { dst, srcs } => {
                    for s in srcs {
                        cons.push(Cons::Copy(reg(*s), reg(*dst)));
                    }
                }
                Instr::Read { dst, addr } => cons.push(Cons::Load(reg(*addr), reg(*dst))),
                Instr::Write { addr, src } => cons.push(Cons::Store(reg(*src), reg(*addr))),
                Instr::Call { dst, callee, args } => match callee {
                    Callee::Func(g) => bind(&mut cons, fi, *g, dst, args),
                    Callee::Dynamic(_) => {
                        for &g in &address_taken {
                            bind(&mut cons, fi, g, dst, args);
                        }
                    }
                    Callee::Extern(_) => {
                        any_extern = true;
                        for a in args {
                            cons.push(Cons::Copy(reg(*a), Node::Ext));
                        }
                        if let Some(d) = dst {
                            cons.push(Cons::Copy(Node::Ext, reg(*d)));
                        }
                    }
                },
                Instr::Lock(_) | Instr::Unlock(_) | Instr::Create(_) | Instr::AddrOfFunc { .. } => {}
            }
        }
    }
    if any_extern {
        // Extern code may load and store through anything it can reach, and
        // may call back into address-taken functions.
        cons.push(Cons::Load(Node::Ext, Node::Ext));
        cons.push(Cons::Store(Node::Ext, Node::Ext));
        for &g in &address_taken {
            for &formal in &p.functions[g].formals {
                cons.push(Cons::Copy(Node::Ext, Node::Reg(g, formal)));
            }
            for &r in &returns[g] {
                cons.push(Cons::Copy(Node::Reg(g, r), Node::Ext));
            }
        }
    }

    let mut s = Solver {
        regs: p.functions.iter().map(|f| vec![BTreeSet::new(); f.registers.len()]).collect(),
        ext: BTreeSet::new(),
        contents: BTreeMap::new(),
    };
    let mut changed = true;
    while changed {
        changed = false;
        for c in &cons {
            match c {
                Cons::Base(n, locs) => {
                    let items = locs.iter().copied().collect();
                    changed |= s.add(*n, &items);
                }
                Cons::Copy(from, to) => {
                    let items = s.get(*from).clone();
                    changed |= s.add(*to, &items);
                }
                Cons::Load(addr, dst) => {
                    let mut items = BTreeSet::new();
                    for l in s.get(*addr) {
                        if let Some(c) = s.contents.get(l) {
                            items.extend(c.iter().copied());
                        }
                    }
                    changed |= s.add(*dst, &items);
                }
                Cons::Store(src, addr) => {
                    let items = s.get(*src).clone();
                    if items.is_empty() {
                        continue;
                    }
                    for l in s.get(*addr).clone() {
                        let cell = s.contents.entry(l).or_default();
                        let before = cell.len();
                        cell.extend(items.iter().copied());
                        changed |= cell.len() != before;
                    }
                }
            }
        }
    }

    let mut locs = BTreeMap::new();
    let mut writes: BTreeMap<AbsLoc, BTreeSet<AccessId>> = BTreeMap::new();
    for a in p.accesses() {
        let addr = p.access_instr(a).address_register().unwrap();
        let set = s.regs[a.func][addr].clone();
        if a.mode.is_write() {
            for l in &set {
                writes.entry(*l).or_default().insert(a);
            }
        }
        locs.insert(a, set);
    }
    PointsTo {
        reg_points_to: s.regs,
        locs,
        writes,
        extern_exposed: s.ext,
        contents: s.contents,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;

    fn g(global: usize) -> AbsLoc {
        AbsLoc::Global { global, field: None }
    }

    #[test]
    fn single_assignment() {
        let p = parse("global g; fn main() { b0: r = &g; s = op(); write *r, s; return; }").unwrap();
        let pt = compute_pointsto(&p);
        let a = p.accesses()[0];
        assert_eq!(pt.locs_of(a), &BTreeSet::from([g(0)]));
        assert!(pt.writes[&g(0)].contains(&a));
    }

    #[test]
    fn join_of_two_definitions() {
        let p = parse(
            "global x, y; fn main() { b0: branch b1 b2; b1: r = &x; goto b3; b2: r = &y; goto b3;
             b3: v = read *r; return; }",
        )
        .unwrap();
        let pt = compute_pointsto(&p);
        assert_eq!(pt.locs_of(p.accesses()[0]), &BTreeSet::from([g(0), g(1)]));
    }

    #[test]
    fn through_memory_and_calls() {
        let p = parse(
            "global cell, target;
             fn get() { b0: c = &cell; v = read *c; return v; }
             fn main() { locals loc; b0: c = &cell; t = &loc; write *c, t; p = call get(); x = read *p; return; }",
        )
        .unwrap();
        let pt = compute_pointsto(&p);
        let last = *p.accesses().last().unwrap();
        assert_eq!(pt.locs_of(last), &BTreeSet::from([AbsLoc::Local { func: 1, local: 0, field: None }]));
    }

    #[test]
    fn whole_aggregate_address_covers_fields() {
        let p = parse("global q { a, b }; fn main() { b0: r = &q; s = &q.b; return; }").unwrap();
        let pt = compute_pointsto(&p);
        assert_eq!(pt.reg(0, 0).len(), 3);
        assert_eq!(pt.reg(0, 1), &BTreeSet::from([AbsLoc::Global { global: 0, field: Some(1) }]));
    }

    #[test]
    fn extern_exposure_is_transitive() {
        let p = parse(
            "global cell; extern ext;
             fn main() { locals inner; b0: c = &cell; i = &inner; write *c, i; call ext(c); return; }",
        )
        .unwrap();
        let pt = compute_pointsto(&p);
        assert!(pt.extern_exposed.contains(&g(0)));
        assert!(pt.extern_exposed.contains(&AbsLoc::Local { func: 0, local: 0, field: None }));
    }

    /// Checks that the solution satisfies every inclusion constraint, so a
    /// further solver round could not add anything.
    fn closed(p: &Program, pt: &PointsTo) -> bool {
        let empty = BTreeSet::new();
        let content = |l: &AbsLoc| pt.contents.get(l).unwrap_or(&empty);
        for (fi, f) in p.functions.iter().enumerate() {
            for (_, _, ins) in f.instrs() {
                let r = |x: RegId| pt.reg(fi, x);
                let ok = match ins {
                    Instr::AddrOf { dst, var, field } => {
                        addr_targets(p, fi, *var, *field).iter().all(|l| r(*dst).contains(l))
                    }
                    Instr::Compute { dst, srcs } => srcs.iter().all(|s| r(*s).is_subset(r(*dst))),
                    Instr::Read { dst, addr } => r(*addr).iter().all(|l| content(l).is_subset(r(*dst))),
                    Instr::Write { addr, src } => r(*addr).iter().all(|l| r(*src).is_subset(content(l))),
                    Instr::Call { callee: Callee::Func(g), args, .. } => args
                        .iter()
                        .zip(&p.functions[*g].formals)
                        .all(|(a, &formal)| r(*a).is_subset(pt.reg(*g, formal))),
                    _ => true,
                };
                if !ok {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn solution_is_a_fixpoint() {
        let p = parse(
            "global a, b; fn f(x) { b0: y = read *x; write *x, y; return y; }
             fn main() { b0: p = &a; q = &b; write *p, q; r = call f(p); s = call f(r); return; }",
        )
        .unwrap();
        let pt = compute_pointsto(&p);
        assert!(closed(&p, &pt));
        assert_eq!(pt, compute_pointsto(&p));
    }
}
