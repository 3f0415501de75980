// SPDX-License-Identifier: Apache-2.0

use crate::ir::cfg_rpo;
use crate::ir::{BlockId, Cfg};

/// Immediate dominators via the Cooper-Harvey-Kennedy iteration. `idom[root]`
/// is `root`; nodes not reachable from `root` get `None`.
fn idoms(root: usize, succs: &[Vec<usize>], preds: &[Vec<usize>]) -> Vec<Option<usize>> {
    let order = cfg_rpo(root, succs);
    let mut pos = vec![usize::MAX; succs.len()];
    for (i, &b) in order.iter().enumerate() {
        pos[b] = i;
    }
    let mut idom = vec![None; succs.len()];
    idom[root] = Some(root);
    let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| {
        while a != b {
            while pos[a] > pos[b] {
                a = idom[a].unwrap();
            }
            while pos[b] > pos[a] {
                b = idom[b].unwrap();
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for &b in order.iter().skip(1) {
            let mut new = None;
            for &q in &preds[b] {
                if idom[q].is_some() {
                    new = Some(match new {
                        None => q,
                        Some(n) => intersect(&idom, q, n),
                    });
                }
            }
            if new.is_some() && idom[b] != new {
                idom[b] = new;
                changed = true;
            }
        }
    }
    idom
}

fn on_chain(tree: &[Option<usize>], a: usize, b: usize) -> bool {
    if a == b {
        return true;
    }
    let mut cur = b;
    while let Some(up) = tree[cur] {
        if up == cur {
            return false;
        }
        if up == a {
            return true;
        }
        cur = up;
    }
    false
}

/// Dominator and post-dominator trees of one function. Node `cfg.exit` is
/// the virtual exit. A block unreachable from the entry (resp. unable to reach
/// the exit) only dominates (resp. post-dominates) itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DominanceInfo {
    pub idom: Vec<Option<BlockId>>,
    pub ipostdom: Vec<Option<BlockId>>,
}

impl DominanceInfo {
    pub fn dominates(&self, a: BlockId, b: BlockId) -> bool {
        on_chain(&self.idom, a, b)
    }

    pub fn postdominates(&self, a: BlockId, b: BlockId) -> bool {
        on_chain(&self.ipostdom, a, b)
    }
}

pub fn compute_dominance(cfg: &Cfg) -> DominanceInfo {
    DominanceInfo {
        idom: idoms(0, &cfg.succs, &cfg.preds),
        ipostdom: idoms(cfg.exit, &cfg.preds, &cfg.succs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;

    fn dom(src: &str) -> DominanceInfo {
        let p = parse(src).unwrap();
        compute_dominance(&Cfg::new(p.main_fn()))
    }

    #[test]
    fn diamond() {
        let d = dom("fn main() { bb1: branch bb3 bb4; bb3: goto bb5; bb4: goto bb5; bb5: return; }");
        for b in 0..4 {
            assert!(d.dominates(0, b));
            assert!(d.postdominates(3, b));
        }
        assert!(!d.dominates(1, 3));
        assert!(!d.postdominates(1, 0));
        assert_eq!(d.idom[3], Some(0));
        assert_eq!(d.ipostdom[0], Some(3));
    }

    #[test]
    fn straight_line() {
        let d = dom("fn main() { b0: goto b1; b1: goto b2; b2: return; }");
        assert_eq!(d.idom[2], Some(1));
        assert_eq!(d.idom[1], Some(0));
    }

    #[test]
    fn loop_without_exit() {
        let d = dom("fn main() { b0: branch b1 b2; b1: goto b1; b2: return; }");
        assert!(d.postdominates(1, 1));
        assert!(!d.postdominates(2, 1));
        assert!(d.postdominates(2, 0));
    }
}
