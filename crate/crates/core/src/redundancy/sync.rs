// SPDX-License-Identifier: Apache-2.0

//! Synchronization classification, per-function sync summaries, and the
//! instruction regions between two accesses.

use std::collections::{BTreeSet, VecDeque};

use crate::facts::CallGraph;
use crate::faults::Faults;
use crate::ir::{AccessId, BlockId, Callee, Cfg, FuncId, Function, Instr, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncKind {
    Release,
    Acquire,
}

pub fn is_release_like(ins: &Instr) -> bool {
    matches!(ins, Instr::Unlock(_) | Instr::Create(_))
}

pub fn is_acquire_like(ins: &Instr) -> bool {
    matches!(ins, Instr::Lock(_))
}

pub fn is_external_call(ins: &Instr) -> bool {
    matches!(ins, Instr::Call { callee: Callee::Extern(_), .. })
}

/// Transitive facts about what a call to each function may execute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncSummaries {
    pub release_free: Vec<bool>,
    pub acquire_free: Vec<bool>,
    pub extern_free: Vec<bool>,
    faults: Faults,
}

impl SyncSummaries {
    pub fn compute(p: &Program, cg: &CallGraph, faults: &Faults) -> SyncSummaries {
        let local = |pred: &dyn Fn(&Instr) -> bool| -> Vec<bool> {
            p.functions.iter().map(|f| f.instrs().any(|(_, _, i)| pred(i))).collect()
        };
        let close = |mut has: Vec<bool>| -> Vec<bool> {
            let mut changed = true;
            while changed {
                changed = false;
                for f in 0..has.len() {
                    if !has[f] && cg.may_call[f].iter().any(|&g| has[g]) {
                        has[f] = true;
                        changed = true;
                    }
                }
            }
            has.into_iter().map(|h| !h).collect()
        };
        let rel = faults.de_ignore_release;
        let acq = faults.de_ignore_acquire;
        SyncSummaries {
            release_free: close(local(&|i| !rel && is_release_like(i))),
            acquire_free: close(local(&|i| !acq && is_acquire_like(i))),
            extern_free: close(local(&is_external_call)),
            faults: *faults,
        }
    }

    /// Whether executing `ins` is free of synchronization of `kind` and of
    /// external calls, callees included.
    pub fn instr_free(&self, cg: &CallGraph, ins: &Instr, kind: SyncKind) -> bool {
        match kind {
            SyncKind::Release if !self.faults.de_ignore_release && is_release_like(ins) => return false,
            SyncKind::Acquire if !self.faults.de_ignore_acquire && is_acquire_like(ins) => return false,
            _ => {}
        }
        if is_external_call(ins) {
            return false;
        }
        let flags = match kind {
            SyncKind::Release => &self.release_free,
            SyncKind::Acquire => &self.acquire_free,
        };
        cg.instr_callees(ins).iter().all(|&g| flags[g] && self.extern_free[g])
    }
}

/// A program point inside one function: `(block, index)`, where
/// `index == instrs.len()` is the terminator.
pub type Point = (BlockId, usize);

fn forward(f: &Function, cfg: &Cfg, (b, i): Point) -> Vec<Point> {
    if i < f.blocks[b].instrs.len() {
        vec![(b, i + 1)]
    } else {
        cfg.succs[b].iter().filter(|&&s| s != cfg.exit).map(|&s| (s, 0)).collect()
    }
}

fn backward(f: &Function, cfg: &Cfg, (b, i): Point) -> Vec<Point> {
    if i > 0 {
        vec![(b, i - 1)]
    } else {
        cfg.preds[b].iter().map(|&q| (q, f.blocks[q].instrs.len())).collect()
    }
}

fn reach(
    f: &Function,
    cfg: &Cfg,
    from: Point,
    avoid: Point,
    step: fn(&Function, &Cfg, Point) -> Vec<Point>,
) -> BTreeSet<Point> {
    let mut seen = BTreeSet::new();
    let mut q: VecDeque<Point> = step(f, cfg, from).into();
    while let Some(pt) = q.pop_front() {
        if pt == avoid || !seen.insert(pt) {
            continue;
        }
        q.extend(step(f, cfg, pt));
    }
    seen
}

/// Points strictly between `from` and `to` on some path from `from` to `to`
/// that does not pass through `anchor` in between. For dominance the anchor
/// is the earlier access, for post-dominance the later one.
pub fn region(f: &Function, cfg: &Cfg, from: Point, to: Point, anchor: Point) -> BTreeSet<Point> {
    let fwd = reach(f, cfg, from, anchor, forward);
    let bwd = reach(f, cfg, to, anchor, backward);
    fwd.intersection(&bwd).copied().collect()
}

/// True iff the subgraph induced by `nodes` contains a cycle.
pub fn has_cycle(f: &Function, cfg: &Cfg, nodes: &BTreeSet<Point>) -> bool {
    let mut indeg: std::collections::BTreeMap<Point, usize> = nodes.iter().map(|&n| (n, 0)).collect();
    for &n in nodes {
        for s in forward(f, cfg, n) {
            if let Some(d) = indeg.get_mut(&s) {
                *d += 1;
            }
        }
    }
    let mut q: VecDeque<Point> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut removed = 0;
    while let Some(n) = q.pop_front() {
        removed += 1;
        for s in forward(f, cfg, n) {
            if let Some(d) = indeg.get_mut(&s) {
                *d -= 1;
                if *d == 0 {
                    q.push_back(s);
                }
            }
        }
    }
    removed != nodes.len()
}

/// Every path from `first` to `second` (accesses of one function) is free of
/// `kind` synchronization and external calls, including inside callees.
pub fn sync_free_between(
    p: &Program,
    cg: &CallGraph,
    cfg: &Cfg,
    sums: &SyncSummaries,
    first: AccessId,
    second: AccessId,
    kind: SyncKind,
) -> bool {
    debug_assert_eq!(first.func, second.func);
    let f: &Function = &p.functions[first.func];
    let anchor = match kind {
        SyncKind::Release => (first.block, first.index),
        SyncKind::Acquire => (second.block, second.index),
    };
    region(f, cfg, (first.block, first.index), (second.block, second.index), anchor)
        .into_iter()
        .filter_map(|(b, i)| f.blocks[b].instrs.get(i))
        .all(|ins| sums.instr_free(cg, ins, kind))
}

pub(crate) fn callee_count(p: &Program, func: FuncId, pts: &BTreeSet<Point>) -> usize {
    pts.iter()
        .filter_map(|&(b, i)| p.functions[func].blocks[b].instrs.get(i))
        .filter(|i| matches!(i, Instr::Call { .. }))
        .count()
}
