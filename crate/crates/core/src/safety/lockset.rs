// SPDX-License-Identifier: Apache-2.0

//! Must-held locksets and lock ownership of abstract locations.

use std::collections::{BTreeMap, BTreeSet};

use crate::facts::{AbsLoc, CallGraph, PointsTo};
use crate::faults::Faults;
use crate::ir::{AccessId, Callee, Cfg, FuncId, Instr, LockId, Program, Terminator};

use super::stc::StcResult;

type Locks = BTreeSet<LockId>;
/// `None` is the top element: the point is not (yet) known to be reachable.
type State = Option<Locks>;

fn meet(a: &State, b: &State) -> State {
    match (a, b) {
        (None, x) | (x, None) => x.clone(),
        (Some(x), Some(y)) => Some(x.intersection(y).copied().collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LockOwnership {
    /// Locks held on every path reaching each access. Accesses in code the
    /// analysis finds unreachable are absent.
    pub must_held: BTreeMap<AccessId, Locks>,
    /// Locks held at every multi-threaded access of a location.
    pub owner: BTreeMap<AbsLoc, Locks>,
    /// Locations with no multi-threaded access at all.
    pub trivially_safe: BTreeSet<AbsLoc>,
    pub entry: Vec<State>,
    pub exit: Vec<State>,
}

struct Ctx<'a> {
    p: &'a Program,
    cg: &'a CallGraph,
    may_unlock: Vec<Locks>,
    ignore_unlock: bool,
}

impl Ctx<'_> {
    fn step(&self, ins: &Instr, before: &State, exit: &[State]) -> State {
        let held = before.as_ref()?;
        match ins {
            Instr::Lock(l) => {
                let mut s = held.clone();
                s.insert(*l);
                Some(s)
            }
            Instr::Unlock(l) if !self.ignore_unlock => {
                let mut s = held.clone();
                s.remove(l);
                Some(s)
            }
            Instr::Call { callee, .. } => {
                let callees = self.cg.instr_callees(ins);
                let is_extern = matches!(callee, Callee::Extern(_));
                if callees.is_empty() {
                    return before.clone();
                }
                let mut out: State = if is_extern { before.clone() } else { None };
                for g in callees {
                    let after = exit[g].as_ref().map(|x| {
                        let mut s: Locks = held.difference(&self.may_unlock[g]).copied().collect();
                        s.extend(x.iter().copied());
                        s
                    });
                    out = meet(&out, &after);
                }
                out
            }
            _ => before.clone(),
        }
    }

    /// Intraprocedural pass. Returns the state before every instruction of
    /// every block and the state at each block end.
    fn run(&self, f: FuncId, cfg: &Cfg, entry: &State, exit: &[State]) -> (Vec<Vec<State>>, Vec<State>) {
        let func = &self.p.functions[f];
        let n = func.blocks.len();
        let mut inn: Vec<State> = vec![None; n];
        let mut out: Vec<State> = vec![None; n];
        let order = cfg.rpo();
        let mut changed = true;
        while changed {
            changed = false;
            for &b in &order {
                if b == cfg.exit {
                    continue;
                }
                let mut s = if b == 0 { entry.clone() } else { None };
                for &q in &cfg.preds[b] {
                    s = meet(&s, &out[q]);
                }
                inn[b] = s.clone();
                for ins in &func.blocks[b].instrs {
                    s = self.step(ins, &s, exit);
                }
                if out[b] != s {
                    out[b] = s;
                    changed = true;
                }
            }
        }
        let before = (0..n)
            .map(|b| {
                let mut s = inn[b].clone();
                let mut v = Vec::with_capacity(func.blocks[b].instrs.len());
                for ins in &func.blocks[b].instrs {
                    v.push(s.clone());
                    s = self.step(ins, &s, exit);
                }
                v
            })
            .collect();
        (before, out)
    }
}

fn may_unlock(p: &Program, cg: &CallGraph, ignore_unlock: bool) -> Vec<Locks> {
    let mut mu: Vec<Locks> = p
        .functions
        .iter()
        .map(|f| {
            f.instrs()
                .filter_map(|(_, _, ins)| match ins {
                    Instr::Unlock(l) if !ignore_unlock => Some(*l),
                    _ => None,
                })
                .collect()
        })
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for f in 0..mu.len() {
            for &g in &cg.may_call[f] {
                if g != f {
                    let add: Vec<LockId> = mu[g].difference(&mu[f]).copied().collect();
                    if !add.is_empty() {
                        mu[f].extend(add);
                        changed = true;
                    }
                }
            }
        }
    }
    mu
}

pub fn compute_lockset(p: &Program, cg: &CallGraph, stc: &StcResult, pt: &PointsTo) -> LockOwnership {
    compute_lockset_with(p, cg, stc, pt, &Faults::none())
}

pub fn compute_lockset_with(
    p: &Program,
    cg: &CallGraph,
    stc: &StcResult,
    pt: &PointsTo,
    faults: &Faults,
) -> LockOwnership {
    let ctx = Ctx {
        p,
        cg,
        may_unlock: may_unlock(p, cg, faults.lo_ignore_unlock),
        ignore_unlock: faults.lo_ignore_unlock,
    };
    let nf = p.functions.len();
    let cfgs: Vec<Cfg> = p.functions.iter().map(Cfg::new).collect();
    let thread_entries: BTreeSet<FuncId> =
        p.create_targets().into_iter().chain(std::iter::once(p.main)).collect();
    let mut entry: Vec<State> = vec![None; nf];
    let mut exit: Vec<State> = vec![None; nf];
    let mut before: Vec<Vec<Vec<State>>> = vec![Vec::new(); nf];
    loop {
        let prev_exit = exit.clone();
        for f in 0..nf {
            let (bf, out) = ctx.run(f, &cfgs[f], &entry[f], &exit);
            exit[f] = p.functions[f]
                .blocks
                .iter()
                .enumerate()
                .filter(|(_, b)| matches!(b.term, Terminator::Return(_)))
                .fold(None, |acc, (b, _)| meet(&acc, &out[b]));
            before[f] = bf;
        }
        let mut new_entry: Vec<State> = (0..nf)
            .map(|f| thread_entries.contains(&f).then(Locks::new))
            .collect();
        for (fi, func) in p.functions.iter().enumerate() {
            for (b, i, ins) in func.instrs() {
                if matches!(ins, Instr::Call { .. }) {
                    for g in cg.instr_callees(ins) {
                        new_entry[g] = meet(&new_entry[g], &before[fi][b][i]);
                    }
                }
            }
        }
        if new_entry == entry && prev_exit == exit {
            break;
        }
        entry = new_entry;
    }

    let mut res = LockOwnership { entry, exit, ..Default::default() };
    let mut owner: BTreeMap<AbsLoc, Locks> = BTreeMap::new();
    for a in p.accesses() {
        let Some(held) = &before[a.func][a.block][a.index] else { continue };
        res.must_held.insert(a, held.clone());
        if !stc.is_mt(p, a.func, a.block) {
            continue;
        }
        for l in pt.locs_of(a) {
            owner
                .entry(*l)
                .and_modify(|s| s.retain(|x| held.contains(x)))
                .or_insert_with(|| held.clone());
        }
    }
    for l in &pt.extern_exposed {
        owner.insert(*l, Locks::new());
    }
    for l in crate::facts::all_locations(p) {
        if !owner.contains_key(&l) {
            res.trivially_safe.insert(l);
        }
    }
    res.owner = owner;
    res
}

pub fn lo_safe_accesses(p: &Program, lo: &LockOwnership, pt: &PointsTo) -> BTreeSet<AccessId> {
    p.accesses()
        .into_iter()
        .filter(|a| {
            pt.locs_of(*a).iter().all(|l| {
                lo.trivially_safe.contains(l) || lo.owner.get(l).is_some_and(|s| !s.is_empty())
            })
        })
        .collect()
}
