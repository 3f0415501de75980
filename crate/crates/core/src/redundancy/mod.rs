// SPDX-License-Identifier: Apache-2.0

//! Dominance-based elimination of redundant instrumentation.
//!
//! An access is dropped when every race it takes part in is preceded (or,
//! for post-dominance, followed) by a race on the same location at a kept
//! access, with no synchronization in between that could order one race
//! differently from the other.

mod sync;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

pub use sync::{
    has_cycle, is_acquire_like, is_external_call, is_release_like, region, sync_free_between, Point, SyncKind,
    SyncSummaries,
};

use crate::facts::{AbsLoc, Facts};
use crate::faults::Faults;
use crate::ir::{AccessId, BlockId, FuncId, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DeConfig {
    pub enable_postdom: bool,
    /// Allow loops and calls between an access and its post-dominating
    /// witness, assuming the code in between terminates.
    pub optimistic_termination: bool,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig { enable_postdom: true, optimistic_termination: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeResult {
    pub final_set: BTreeSet<AccessId>,
    /// Eliminated access → dominating witness.
    pub dom_redundant: BTreeMap<AccessId, AccessId>,
    /// Eliminated access → post-dominating witness.
    pub postdom_redundant: BTreeMap<AccessId, AccessId>,
    /// Accesses that must stay instrumented because a dominance elimination
    /// relies on them.
    pub protected: BTreeSet<AccessId>,
}

/// Singleton, equal points-to sets naming a global cell. Locals are left out
/// because one abstract local stands for many activations.
pub fn must_alias(facts: &Facts, a: AccessId, b: AccessId) -> Option<AbsLoc> {
    let la = facts.pt.locs_of(a);
    if la.len() != 1 || la != facts.pt.locs_of(b) {
        return None;
    }
    let l = *la.iter().next().unwrap();
    l.is_global().then_some(l)
}

fn depths(tree: &[Option<BlockId>]) -> Vec<usize> {
    (0..tree.len())
        .map(|b| {
            let mut d = 0;
            let mut cur = b;
            while let Some(up) = tree[cur] {
                if up == cur {
                    break;
                }
                d += 1;
                cur = up;
            }
            d
        })
        .collect()
}

fn block_order(start: Vec<BlockId>, n: usize) -> Vec<BlockId> {
    let mut order: Vec<BlockId> = start.into_iter().filter(|&b| b < n).collect();
    let seen: BTreeSet<BlockId> = order.iter().copied().collect();
    order.extend((0..n).filter(|b| !seen.contains(b)));
    order
}

struct Pass<'a> {
    p: &'a Program,
    facts: &'a Facts,
    sums: SyncSummaries,
    config: DeConfig,
}

impl Pass<'_> {
    fn dom_ok(&self, w: AccessId, a: AccessId) -> bool {
        let d = &self.facts.dom[a.func];
        let placed = if w.block == a.block { w.index < a.index } else { d.dominates(w.block, a.block) };
        placed
            && (!a.mode.is_write() || w.mode.is_write())
            && must_alias(self.facts, w, a).is_some()
            && sync_free_between(self.p, &self.facts.cg, &self.facts.cfgs[a.func], &self.sums, w, a, SyncKind::Release)
    }

    fn postdom_ok(&self, w: AccessId, a: AccessId) -> bool {
        let d = &self.facts.dom[a.func];
        let placed = if w.block == a.block { w.index > a.index } else { d.postdominates(w.block, a.block) };
        if !(placed
            && (!a.mode.is_write() || w.mode.is_write())
            && must_alias(self.facts, w, a).is_some()
            && sync_free_between(self.p, &self.facts.cg, &self.facts.cfgs[a.func], &self.sums, a, w, SyncKind::Acquire))
        {
            return false;
        }
        if self.config.optimistic_termination {
            return true;
        }
        let f = &self.p.functions[a.func];
        let cfg = &self.facts.cfgs[a.func];
        let mut pts = region(f, cfg, (a.block, a.index), (w.block, w.index), (w.block, w.index));
        if sync::callee_count(self.p, a.func, &pts) > 0 {
            return false;
        }
        pts.insert((a.block, a.index));
        !has_cycle(f, cfg, &pts)
    }

    fn accesses_of(&self, func: FuncId, set: &BTreeSet<AccessId>) -> Vec<AccessId> {
        set.iter().copied().filter(|a| a.func == func).collect()
    }

    fn dom_pass(&self, kept: &mut BTreeSet<AccessId>, res: &mut DeResult) {
        for func in 0..self.p.functions.len() {
            let n = self.p.functions[func].blocks.len();
            let order = block_order(self.facts.cfgs[func].rpo(), n);
            let depth = depths(&self.facts.dom[func].idom);
            let mut mine = self.accesses_of(func, kept);
            mine.sort_by_key(|a| (order.iter().position(|&b| b == a.block), a.index));
            for a in mine {
                if res.protected.contains(&a) {
                    continue;
                }
                let best = self
                    .accesses_of(func, kept)
                    .into_iter()
                    .filter(|&w| w != a && self.dom_ok(w, a))
                    .max_by_key(|w| (w.block == a.block, depth[w.block], w.index));
                if let Some(w) = best {
                    kept.remove(&a);
                    res.dom_redundant.insert(a, w);
                    res.protected.insert(w);
                }
            }
        }
    }

    fn postdom_pass(&self, kept: &mut BTreeSet<AccessId>, res: &mut DeResult) {
        for func in 0..self.p.functions.len() {
            let n = self.p.functions[func].blocks.len();
            let order = block_order(self.facts.cfgs[func].reverse_rpo(), n);
            let depth = depths(&self.facts.dom[func].ipostdom);
            let mut mine = self.accesses_of(func, kept);
            mine.sort_by_key(|a| (order.iter().position(|&b| b == a.block), std::cmp::Reverse(a.index)));
            for a in mine {
                if res.protected.contains(&a) {
                    continue;
                }
                let best = self
                    .accesses_of(func, kept)
                    .into_iter()
                    .filter(|&w| w != a && self.postdom_ok(w, a))
                    .max_by_key(|w| (w.block == a.block, depth[w.block], std::cmp::Reverse(w.index)));
                if let Some(w) = best {
                    kept.remove(&a);
                    res.postdom_redundant.insert(a, w);
                }
            }
        }
    }
}

/// Remove dominance- and post-dominance-redundant accesses from
/// `instrumented`. Accesses in `protected` are never removed.
pub fn apply_de(
    p: &Program,
    facts: &Facts,
    instrumented: &BTreeSet<AccessId>,
    protected: &BTreeSet<AccessId>,
    config: &DeConfig,
) -> DeResult {
    apply_de_with(p, facts, instrumented, protected, config, &Faults::none())
}

pub fn apply_de_with(
    p: &Program,
    facts: &Facts,
    instrumented: &BTreeSet<AccessId>,
    protected: &BTreeSet<AccessId>,
    config: &DeConfig,
    faults: &Faults,
) -> DeResult {
    let pass = Pass { p, facts, sums: SyncSummaries::compute(p, &facts.cg, faults), config: *config };
    let mut res = DeResult { protected: protected.clone(), ..Default::default() };
    let mut kept = instrumented.clone();
    pass.dom_pass(&mut kept, &mut res);
    if config.enable_postdom {
        pass.postdom_pass(&mut kept, &mut res);
    }
    res.final_set = kept;
    res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;

    fn de(src: &str, config: DeConfig) -> (Program, DeResult) {
        de_with(src, config, &Faults::none())
    }

    fn de_with(src: &str, config: DeConfig, faults: &Faults) -> (Program, DeResult) {
        let p = parse(src).unwrap();
        let facts = Facts::compute(&p);
        let all: BTreeSet<AccessId> = p.accesses().into_iter().collect();
        let r = apply_de_with(&p, &facts, &all, &BTreeSet::new(), &config, faults);
        (p, r)
    }

    fn labels(p: &Program, set: impl IntoIterator<Item = AccessId>) -> Vec<String> {
        set.into_iter().map(|a| a.render(p)).collect()
    }

    const FIG3: &str = include_str!("../../../../programs/fig3.mini");

    #[test]
    fn fig3_diamond() {
        let (p, r) = de(FIG3, DeConfig::default());
        let frag: Vec<String> = labels(&p, r.final_set.iter().copied().filter(|a| a.func == 0));
        assert_eq!(frag, vec!["frag:BB1:0:r", "frag:BB5:0:r", "frag:BB5:1:r"]);
        let i1 = p.access_by_label("frag:BB1:0:r").unwrap();
        let i2 = p.access_by_label("frag:BB3:0:r").unwrap();
        let i3 = p.access_by_label("frag:BB4:0:r").unwrap();
        let i5 = p.access_by_label("frag:BB5:1:r").unwrap();
        assert_eq!(r.dom_redundant, BTreeMap::from([(i2, i1)]));
        assert_eq!(r.postdom_redundant, BTreeMap::from([(i3, i5)]));
    }

    #[test]
    fn fig3_without_postdom_keeps_i3() {
        let (p, r) = de(FIG3, DeConfig { enable_postdom: false, optimistic_termination: false });
        assert!(r.final_set.contains(&p.access_by_label("frag:BB4:0:r").unwrap()));
        assert!(r.postdom_redundant.is_empty());
    }

    #[test]
    fn read_does_not_cover_write() {
        let (p, r) = de("global g; fn main() { b0: a = &g; x = read *a; write *a, x; return; }", DeConfig::default());
        // The read cannot stand in for the later write, but the write
        // post-dominates the read.
        assert_eq!(labels(&p, r.final_set), vec!["main:b0:2:w"]);
        assert!(r.dom_redundant.is_empty());
    }

    #[test]
    fn unlock_blocks_dominance() {
        let src = "global g; lock l; fn main() { b0: a = &g; lock l; x = read *a; unlock l; y = read *a; return; }";
        let (_, r) = de(src, DeConfig { enable_postdom: false, optimistic_termination: false });
        assert!(r.dom_redundant.is_empty());
        let faults = Faults { de_ignore_release: true, ..Faults::none() };
        let (_, r) = de_with(src, DeConfig { enable_postdom: false, optimistic_termination: false }, &faults);
        assert_eq!(r.dom_redundant.len(), 1);
    }

    #[test]
    fn lock_blocks_postdominance() {
        let src = "global g; lock l; fn main() { b0: a = &g; x = read *a; lock l; y = read *a; unlock l; return; }";
        let (_, r) = de(src, DeConfig::default());
        assert!(r.postdom_redundant.is_empty());
        // Dominance still applies: lock is not release-like.
        assert_eq!(r.dom_redundant.len(), 1);
    }

    #[test]
    fn callee_with_create_blocks_dominance() {
        let src = "global g; fn w() { b0: return; } fn spawn() { b0: create w; return; }
                   fn main() { b0: a = &g; x = read *a; call spawn(); y = read *a; return; }";
        let (_, r) = de(src, DeConfig { enable_postdom: false, optimistic_termination: false });
        assert!(r.dom_redundant.is_empty());
    }

    #[test]
    fn loop_between_needs_optimistic_flag() {
        let src = "global g; fn main() { b0: a = &g; x = read *a; goto b1; b1: branch b1 b2; b2: y = read *a; return; }";
        let off = DeConfig { enable_postdom: true, optimistic_termination: false };
        let on = DeConfig { enable_postdom: true, optimistic_termination: true };
        let (p, r) = de(src, off);
        // Dominance removes the later read; the earlier one stays either way
        // as its witness.
        assert_eq!(labels(&p, r.final_set.clone()), vec!["main:b0:1:r"]);
        let (_, r2) = de(src, on);
        assert_eq!(r2.final_set, r.final_set);

        let src = "global g; fn main() { b0: a = &g; x = read *a; goto b1; b1: branch b1 b2; b2: write *a, x; return; }";
        let (p, r) = de(src, off);
        assert_eq!(r.final_set.len(), 2, "{:?}", labels(&p, r.final_set.clone()));
        let (_, r) = de(src, on);
        assert_eq!(r.postdom_redundant.len(), 1);
    }

    #[test]
    fn single_access_unchanged() {
        let (_, r) = de("global g; fn main() { b0: a = &g; x = read *a; return; }", DeConfig::default());
        assert_eq!(r.final_set.len(), 1);
    }

    #[test]
    fn locals_never_must_alias() {
        let (_, r) = de("fn main() { locals v; b0: a = &v; x = read *a; y = read *a; return; }", DeConfig::default());
        assert_eq!(r.final_set.len(), 2);
    }

    #[test]
    fn idempotent_with_same_protection() {
        let (p, r) = de(FIG3, DeConfig::default());
        let facts = Facts::compute(&p);
        let again = apply_de(&p, &facts, &r.final_set, &r.protected, &DeConfig::default());
        assert_eq!(again.final_set, r.final_set);
        assert!(again.dom_redundant.is_empty() && again.postdom_redundant.is_empty());
    }
}
