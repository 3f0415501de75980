// SPDX-License-Identifier: Apache-2.0

//! Single-threaded context: code that provably runs before any thread is
//! created.

use std::collections::{BTreeSet, VecDeque};

use crate::facts::CallGraph;
use crate::faults::Faults;
use crate::ir::{AccessId, BlockId, Cfg, FuncId, Instr, Program};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StcResult {
    /// Functions that may run while several threads exist. Never contains main.
    pub mt_functions: BTreeSet<FuncId>,
    /// Blocks of main that may run after the first thread creation.
    pub mt_main_blocks: BTreeSet<BlockId>,
}

impl StcResult {
    pub fn is_mt(&self, p: &Program, func: FuncId, block: BlockId) -> bool {
        if func == p.main {
            self.mt_main_blocks.contains(&block)
        } else {
            self.mt_functions.contains(&func)
        }
    }
}

struct Inputs {
    seeds: BTreeSet<FuncId>,
    self_callers: BTreeSet<FuncId>,
    create_blocks: BTreeSet<BlockId>,
    main_succs: Vec<Vec<BlockId>>,
    /// Functions each block of main may call, directly or transitively.
    main_reach: Vec<BTreeSet<FuncId>>,
}

fn inputs(p: &Program, cg: &CallGraph) -> Inputs {
    let mut seeds = cg.address_taken.clone();
    let mut create_blocks = BTreeSet::new();
    for (fi, f) in p.functions.iter().enumerate() {
        for (b, _, ins) in f.instrs() {
            if let Instr::Create(t) = ins {
                seeds.insert(*t);
                if fi == p.main {
                    create_blocks.insert(b);
                } else {
                    seeds.insert(fi);
                }
            }
        }
    }
    seeds.remove(&p.main);
    let self_callers = (0..p.functions.len())
        .filter(|&f| f != p.main && cg.reachable_from(f).contains(&f))
        .collect();
    let cfg = Cfg::new(p.main_fn());
    let main_succs = (0..cfg.len())
        .map(|b| cfg.succs[b].iter().copied().filter(|&s| s != cfg.exit).collect())
        .collect();
    let main_reach = cg.block_callees[p.main]
        .iter()
        .map(|direct| {
            let mut all = direct.clone();
            for &g in direct {
                all.extend(cg.reachable_from(g));
            }
            all
        })
        .collect();
    Inputs { seeds, self_callers, create_blocks, main_succs, main_reach }
}

/// Least solution by worklist propagation.
pub fn compute_stc(p: &Program, cg: &CallGraph) -> StcResult {
    compute_stc_with(p, cg, &Faults::none())
}

pub fn compute_stc_with(p: &Program, cg: &CallGraph, faults: &Faults) -> StcResult {
    let inp = inputs(p, cg);
    let mut res = StcResult::default();
    let mut fq: VecDeque<FuncId> = VecDeque::new();
    let mut bq: VecDeque<BlockId> = VecDeque::new();
    for &f in &inp.seeds {
        res.mt_functions.insert(f);
        fq.push_back(f);
    }
    for &b in &inp.create_blocks {
        res.mt_main_blocks.insert(b);
        bq.push_back(b);
    }
    let main_blocks = p.main_fn().blocks.len();
    let mut self_rule_fired = false;
    while !fq.is_empty() || !bq.is_empty() {
        while let Some(g) = fq.pop_front() {
            // "f may call f" holds for recursive functions as soon as any
            // function is multi-threaded.
            if !self_rule_fired {
                self_rule_fired = true;
                for &f in &inp.self_callers {
                    if res.mt_functions.insert(f) {
                        fq.push_back(f);
                    }
                }
            }
            for &f in &cg.may_call[g] {
                if f != p.main && res.mt_functions.insert(f) {
                    fq.push_back(f);
                }
            }
            for b in 0..main_blocks {
                if inp.main_reach[b].contains(&g) && res.mt_main_blocks.insert(b) {
                    bq.push_back(b);
                }
            }
        }
        while let Some(b) = bq.pop_front() {
            for &f in &inp.main_reach[b] {
                if f != p.main && res.mt_functions.insert(f) {
                    fq.push_back(f);
                }
            }
            if !faults.stc_ignore_successors {
                for &s in &inp.main_succs[b] {
                    if res.mt_main_blocks.insert(s) {
                        bq.push_back(s);
                    }
                }
            }
        }
    }
    res
}

/// Least solution by naive Kleene iteration from the empty sets.
pub fn compute_stc_kleene(p: &Program, cg: &CallGraph) -> StcResult {
    let inp = inputs(p, cg);
    let mut cur = StcResult::default();
    loop {
        let mut next = StcResult::default();
        next.mt_functions.extend(inp.seeds.iter().copied());
        next.mt_main_blocks.extend(inp.create_blocks.iter().copied());
        for f in 0..p.functions.len() {
            if f == p.main {
                continue;
            }
            let from_mt = cur.mt_functions.iter().any(|&g| cg.may_call[g].contains(&f));
            let self_call = inp.self_callers.contains(&f) && !cur.mt_functions.is_empty();
            let from_main = cur.mt_main_blocks.iter().any(|&b| inp.main_reach[b].contains(&f));
            if from_mt || self_call || from_main {
                next.mt_functions.insert(f);
            }
        }
        for b in 0..p.main_fn().blocks.len() {
            let calls_mt = cur.mt_functions.iter().any(|g| inp.main_reach[b].contains(g));
            let succ = inp.main_succs.iter().enumerate().any(|(pb, ss)| cur.mt_main_blocks.contains(&pb) && ss.contains(&b));
            if calls_mt || succ {
                next.mt_main_blocks.insert(b);
            }
        }
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Accesses outside multi-threaded functions and blocks.
pub fn stc_safe_accesses(p: &Program, stc: &StcResult) -> BTreeSet<AccessId> {
    p.accesses().into_iter().filter(|a| !stc.is_mt(p, a.func, a.block)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facts::compute_callgraph;
    use crate::ir::parse;

    fn run(src: &str) -> (Program, StcResult) {
        let p = parse(src).unwrap();
        let cg = compute_callgraph(&p);
        let r = compute_stc(&p, &cg);
        assert_eq!(r, compute_stc_kleene(&p, &cg));
        (p, r)
    }

    #[test]
    fn no_create_means_nothing_is_mt() {
        let (p, r) = run("global g; fn f() { b0: x = &g; y = read *x; return; } fn main() { b0: call f(); return; }");
        assert!(r.mt_functions.is_empty() && r.mt_main_blocks.is_empty());
        assert_eq!(stc_safe_accesses(&p, &r).len(), 1);
    }

    #[test]
    fn call_after_create_makes_callee_mt() {
        let (p, r) = run(
            "fn f() { b0: return; } fn g() { b0: return; }
             fn main() { b0: call f(); goto b1; b1: create g; goto b2; b2: call f(); return; }",
        );
        assert!(r.mt_functions.contains(&p.func_by_name("f").unwrap()));
        assert!(r.mt_functions.contains(&p.func_by_name("g").unwrap()));
        // b0 calls a function that is multi-threaded, so b0 is too.
        assert_eq!(r.mt_main_blocks, BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn creation_through_nested_call() {
        let (p, r) = run(
            "fn w() { b0: return; } fn spawn() { b0: create w; return; } fn h() { b0: call spawn(); return; }
             fn main() { b0: call h(); goto b1; b1: return; }",
        );
        assert!(r.mt_main_blocks.contains(&0) && r.mt_main_blocks.contains(&1));
        assert!(r.mt_functions.contains(&p.func_by_name("h").unwrap()));
    }

    #[test]
    fn helper_called_only_before_create_stays_st() {
        let (p, r) = run(
            "fn init() { b0: return; } fn worker() { b0: return; }
             fn main() { b0: call init(); goto b1; b1: create worker; return; }",
        );
        assert!(!r.mt_functions.contains(&p.func_by_name("init").unwrap()));
        assert!(!r.mt_main_blocks.contains(&0));
    }

    #[test]
    fn successor_fault_drops_later_blocks() {
        let p = parse("fn w() { b0: return; } fn main() { b0: create w; goto b1; b1: return; }").unwrap();
        let cg = compute_callgraph(&p);
        let faults = Faults { stc_ignore_successors: true, ..Faults::none() };
        assert!(!compute_stc_with(&p, &cg, &faults).mt_main_blocks.contains(&1));
        assert!(compute_stc(&p, &cg).mt_main_blocks.contains(&1));
    }
}
