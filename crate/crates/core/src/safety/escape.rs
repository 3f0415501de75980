// SPDX-License-Identifier: Apache-2.0

//! Escape analysis. Function summaries record which formals escape through
//! the function body alone; the whole-program solution adds caller-to-callee
//! propagation and ties escaping registers to the locations they point to.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::facts::{addr_targets, all_locations, AbsLoc, CallGraph, PointsTo};
use crate::faults::Faults;
use crate::ir::{AccessId, Callee, FuncId, Instr, LocalId, Program, RegId, Terminator, VarRef};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EscapeResult {
    pub esc_regs: Vec<BTreeSet<RegId>>,
    pub esc_locs: BTreeSet<AbsLoc>,
    /// Per function, one flag per formal.
    pub summaries: Vec<Vec<bool>>,
}

impl EscapeResult {
    pub fn escapes(&self, f: FuncId, r: RegId) -> bool {
        self.esc_regs[f].contains(&r)
    }

    /// Escaping locals of `f` as (local, field) pairs.
    pub fn esc_locals(&self, f: FuncId) -> BTreeSet<(LocalId, Option<usize>)> {
        self.esc_locs
            .iter()
            .filter_map(|l| match *l {
                AbsLoc::Local { func, local, field } if func == f => Some((local, field)),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Fact {
    Reg(FuncId, RegId),
    Loc(AbsLoc),
}

#[derive(Default)]
struct Graph {
    base: BTreeSet<Fact>,
    edges: BTreeMap<Fact, BTreeSet<Fact>>,
}

impl Graph {
    fn edge(&mut self, from: Fact, to: Fact) {
        self.edges.entry(from).or_default().insert(to);
    }

    fn closure(&self) -> BTreeSet<Fact> {
        let mut seen = BTreeSet::new();
        let mut q: VecDeque<Fact> = self.base.iter().copied().collect();
        while let Some(f) = q.pop_front() {
            if seen.insert(f) {
                if let Some(next) = self.edges.get(&f) {
                    q.extend(next.iter().copied());
                }
            }
        }
        seen
    }
}

fn dynamic_callees(cg: &CallGraph, ins: &Instr) -> BTreeSet<FuncId> {
    match ins {
        Instr::Call { callee: Callee::Dynamic(_), .. } => cg.address_taken.clone(),
        Instr::Call { callee: Callee::Func(g), .. } => BTreeSet::from([*g]),
        _ => BTreeSet::new(),
    }
}

fn returns(p: &Program, f: FuncId) -> impl Iterator<Item = RegId> + '_ {
    p.functions[f].blocks.iter().filter_map(|b| match b.term {
        Terminator::Return(Some(r)) => Some(r),
        _ => None,
    })
}

/// Rules that only look at function bodies and callee summaries.
fn intrinsic_rules(p: &Program, cg: &CallGraph, faults: &Faults, g: &mut Graph) {
    for (fi, f) in p.functions.iter().enumerate() {
        let reg = |r: RegId| Fact::Reg(fi, r);
        for r in returns(p, fi) {
            g.base.insert(reg(r));
        }
        for (l, d) in f.locals.iter().enumerate() {
            for k in 0..d.field_count() {
                g.edge(
                    Fact::Loc(AbsLoc::Local { func: fi, local: l, field: None }),
                    Fact::Loc(AbsLoc::Local { func: fi, local: l, field: Some(k) }),
                );
            }
        }
        for (_, _, ins) in f.instrs() {
            match ins {
                Instr::AddrOf { dst, var: VarRef::Global(_), .. } => {
                    g.base.insert(reg(*dst));
                }
                Instr::AddrOf { dst, var, field } => {
                    for t in addr_targets(p, fi, *var, *field) {
                        g.edge(reg(*dst), Fact::Loc(t));
                        g.edge(Fact::Loc(t), reg(*dst));
                    }
                }
                Instr::Compute { dst, srcs } => {
                    for s in srcs {
                        g.edge(reg(*s), reg(*dst));
                    }
                }
                Instr::Read { dst, addr } => g.edge(reg(*addr), reg(*dst)),
                Instr::Write { addr, src } => {
                    if !faults.ea_ignore_stores {
                        g.edge(reg(*addr), reg(*src));
                    }
                }
                Instr::Call { dst, callee, args } => {
                    if let Some(d) = dst {
                        g.base.insert(reg(*d));
                    }
                    if let Callee::Extern(_) = callee {
                        for a in args {
                            g.base.insert(reg(*a));
                        }
                    }
                    for callee in dynamic_callees(cg, ins) {
                        for (a, &formal) in args.iter().zip(&p.functions[callee].formals) {
                            g.edge(Fact::Reg(callee, formal), reg(*a));
                        }
                    }
                }
                Instr::Lock(_) | Instr::Unlock(_) | Instr::Create(_) | Instr::AddrOfFunc { .. } => {}
            }
        }
    }
}

/// Caller-to-callee propagation and the link to points-to sets.
fn whole_program_rules(p: &Program, cg: &CallGraph, pt: &PointsTo, faults: &Faults, g: &mut Graph) {
    for (fi, f) in p.functions.iter().enumerate() {
        for (_, _, ins) in f.instrs() {
            if let Instr::Call { args, .. } = ins {
                for callee in dynamic_callees(cg, ins) {
                    for (a, &formal) in args.iter().zip(&p.functions[callee].formals) {
                        g.edge(Fact::Reg(fi, *a), Fact::Reg(callee, formal));
                    }
                }
            }
        }
        for r in 0..f.registers.len() {
            for l in pt.reg(fi, r) {
                g.edge(Fact::Loc(*l), Fact::Reg(fi, r));
                if !faults.ea_ignore_stores {
                    g.edge(Fact::Reg(fi, r), Fact::Loc(*l));
                }
            }
        }
    }
    if cg.has_extern_calls {
        for &t in &cg.address_taken {
            for &formal in &p.functions[t].formals {
                g.base.insert(Fact::Reg(t, formal));
            }
        }
    }
    for l in all_locations(p) {
        if l.is_global() {
            g.base.insert(Fact::Loc(l));
        }
        if l.field().is_some() {
            g.edge(Fact::Loc(l.base()), Fact::Loc(l));
        }
    }
    for l in &pt.extern_exposed {
        g.base.insert(Fact::Loc(*l));
    }
    if !faults.ea_ignore_stores {
        for (l, cs) in &pt.contents {
            for m in cs {
                g.edge(Fact::Loc(*l), Fact::Loc(*m));
            }
        }
    }
}

fn to_result(p: &Program, intrinsic: &BTreeSet<Fact>, full: &BTreeSet<Fact>) -> EscapeResult {
    let mut res = EscapeResult {
        esc_regs: vec![BTreeSet::new(); p.functions.len()],
        ..Default::default()
    };
    for f in full {
        match f {
            Fact::Reg(func, r) => {
                res.esc_regs[*func].insert(*r);
            }
            Fact::Loc(l) => {
                res.esc_locs.insert(*l);
            }
        }
    }
    res.summaries = p
        .functions
        .iter()
        .enumerate()
        .map(|(fi, f)| f.formals.iter().map(|&r| intrinsic.contains(&Fact::Reg(fi, r))).collect())
        .collect();
    res
}

pub fn compute_escape(p: &Program, cg: &CallGraph, pt: &PointsTo) -> EscapeResult {
    compute_escape_with(p, cg, pt, &Faults::none())
}

/// Least solution by worklist propagation over the rule graph.
pub fn compute_escape_with(p: &Program, cg: &CallGraph, pt: &PointsTo, faults: &Faults) -> EscapeResult {
    let mut g = Graph::default();
    intrinsic_rules(p, cg, faults, &mut g);
    let intrinsic = g.closure();
    whole_program_rules(p, cg, pt, faults, &mut g);
    let full = g.closure();
    to_result(p, &intrinsic, &full)
}

/// Least solution by naive Kleene iteration, evaluating each rule directly
/// on the program in every round.
pub fn compute_escape_kleene(p: &Program, cg: &CallGraph, pt: &PointsTo) -> EscapeResult {
    let intrinsic = kleene(p, cg, pt, false);
    let full = kleene(p, cg, pt, true);
    to_result(p, &intrinsic, &full)
}

fn kleene(p: &Program, cg: &CallGraph, pt: &PointsTo, whole: bool) -> BTreeSet<Fact> {
    let locs = all_locations(p);
    let mut cur: BTreeSet<Fact> = BTreeSet::new();
    loop {
        let has = |f: Fact| cur.contains(&f);
        let mut next = BTreeSet::new();
        for (fi, f) in p.functions.iter().enumerate() {
            let reg = |r: RegId| Fact::Reg(fi, r);
            next.extend(returns(p, fi).map(reg));
            for (_, _, ins) in f.instrs() {
                match ins {
                    Instr::AddrOf { dst, var, field } => {
                        let ts = addr_targets(p, fi, *var, *field);
                        if matches!(var, VarRef::Global(_)) || ts.iter().any(|t| has(Fact::Loc(*t))) {
                            next.insert(reg(*dst));
                        }
                        if !matches!(var, VarRef::Global(_)) && has(reg(*dst)) {
                            next.extend(ts.iter().map(|t| Fact::Loc(*t)));
                        }
                    }
                    Instr::Compute { dst, srcs } => {
                        if srcs.iter().any(|s| has(reg(*s))) {
                            next.insert(reg(*dst));
                        }
                    }
                    Instr::Read { dst, addr } => {
                        if has(reg(*addr)) {
                            next.insert(reg(*dst));
                        }
                    }
                    Instr::Write { addr, src } => {
                        if has(reg(*addr)) {
                            next.insert(reg(*src));
                        }
                    }
                    Instr::Call { dst, callee, args } => {
                        if let Some(d) = dst {
                            next.insert(reg(*d));
                        }
                        let callees = dynamic_callees(cg, ins);
                        for (i, a) in args.iter().enumerate() {
                            let via_summary = callees.iter().any(|&g| {
                                p.functions[g].formals.get(i).is_some_and(|&fr| has(Fact::Reg(g, fr)))
                            });
                            if matches!(callee, Callee::Extern(_)) || via_summary {
                                next.insert(reg(*a));
                            }
                            if whole && has(reg(*a)) {
                                for &g in &callees {
                                    if let Some(&fr) = p.functions[g].formals.get(i) {
                                        next.insert(Fact::Reg(g, fr));
                                    }
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
            for (l, d) in f.locals.iter().enumerate() {
                if has(Fact::Loc(AbsLoc::Local { func: fi, local: l, field: None })) {
                    for k in 0..d.field_count() {
                        next.insert(Fact::Loc(AbsLoc::Local { func: fi, local: l, field: Some(k) }));
                    }
                }
            }
            if whole {
                for r in 0..f.registers.len() {
                    let set = pt.reg(fi, r);
                    if set.iter().any(|l| has(Fact::Loc(*l))) {
                        next.insert(reg(r));
                    }
                    if has(reg(r)) {
                        next.extend(set.iter().map(|l| Fact::Loc(*l)));
                    }
                }
            }
        }
        if whole {
            if cg.has_extern_calls {
                for &t in &cg.address_taken {
                    next.extend(p.functions[t].formals.iter().map(|&r| Fact::Reg(t, r)));
                }
            }
            for l in &locs {
                if l.is_global() || pt.extern_exposed.contains(l) || has(Fact::Loc(l.base())) {
                    next.insert(Fact::Loc(*l));
                }
                if has(Fact::Loc(*l)) {
                    if let Some(cs) = pt.contents.get(l) {
                        next.extend(cs.iter().map(|m| Fact::Loc(*m)));
                    }
                }
            }
        }
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Accesses whose address register does not escape.
pub fn ea_safe_accesses(p: &Program, ea: &EscapeResult) -> BTreeSet<AccessId> {
    p.accesses()
        .into_iter()
        .filter(|a| {
            let addr = p.access_instr(*a).address_register().unwrap();
            !ea.escapes(a.func, addr)
        })
        .collect()
}
