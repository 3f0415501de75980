// SPDX-License-Identifier: Apache-2.0

use std::collections::VecDeque;
use std::fmt;

use super::{BlockId, Function};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CfgWarning {
    UnreachableBlock { func: String, block: String },
}

impl fmt::Display for CfgWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CfgWarning::UnreachableBlock { func, block } => {
                write!(f, "warning: block `{block}` in `{func}` is unreachable")
            }
        }
    }
}

/// Successor and predecessor maps for one function, extended with a virtual
/// exit node (index `blocks.len()`) that every `return` block flows into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub succs: Vec<Vec<BlockId>>,
    pub preds: Vec<Vec<BlockId>>,
    pub exit: BlockId,
    pub reachable: Vec<bool>,
}

impl Cfg {
    pub fn new(f: &Function) -> Cfg {
        let n = f.blocks.len();
        let exit = n;
        let mut succs = vec![Vec::new(); n + 1];
        let mut preds = vec![Vec::new(); n + 1];
        for (b, block) in f.blocks.iter().enumerate() {
            let mut ss: Vec<BlockId> = block.term.successors().to_vec();
            if ss.is_empty() {
                ss.push(exit);
            }
            let mut seen = Vec::new();
            for s in ss {
                if !seen.contains(&s) {
                    seen.push(s);
                    preds[s].push(b);
                }
            }
            succs[b] = seen;
        }
        let mut reachable = vec![false; n + 1];
        let mut queue = VecDeque::from([Function::ENTRY]);
        reachable[Function::ENTRY] = true;
        while let Some(b) = queue.pop_front() {
            for &s in &succs[b] {
                if !reachable[s] {
                    reachable[s] = true;
                    queue.push_back(s);
                }
            }
        }
        Cfg { succs, preds, exit, reachable }
    }

    /// Number of real blocks (the virtual exit excluded).
    pub fn len(&self) -> usize {
        self.exit
    }

    pub fn is_empty(&self) -> bool {
        self.exit == 0
    }

    pub fn warnings(&self, f: &Function) -> Vec<CfgWarning> {
        (0..self.len())
            .filter(|&b| !self.reachable[b])
            .map(|b| CfgWarning::UnreachableBlock {
                func: f.name.clone(),
                block: f.blocks[b].label.clone(),
            })
            .collect()
    }

    /// Reverse postorder from the entry over reachable nodes, virtual exit
    /// included when reachable.
    pub fn rpo(&self) -> Vec<BlockId> {
        rpo_from(Function::ENTRY, &self.succs)
    }

    /// Reverse postorder of the reverse graph starting at the virtual exit.
    pub fn reverse_rpo(&self) -> Vec<BlockId> {
        rpo_from(self.exit, &self.preds)
    }
}

pub fn rpo_from(start: usize, succs: &[Vec<usize>]) -> Vec<usize> {
    let mut visited = vec![false; succs.len()];
    let mut post = Vec::new();
    let mut stack = vec![(start, 0usize)];
    visited[start] = true;
    while let Some(&mut (node, ref mut next)) = stack.last_mut() {
        if let Some(&s) = succs[node].get(*next) {
            *next += 1;
            if !visited[s] {
                visited[s] = true;
                stack.push((s, 0));
            }
        } else {
            post.push(node);
            stack.pop();
        }
    }
    post.reverse();
    post
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;

    fn cfg_of(src: &str) -> (crate::ir::Program, Cfg) {
        let p = parse(src).unwrap();
        let c = Cfg::new(p.main_fn());
        (p, c)
    }

    #[test]
    fn diamond() {
        let (_, c) = cfg_of(
            "fn main() { bb1: branch bb3 bb4; bb3: goto bb5; bb4: goto bb5; bb5: return; }",
        );
        assert_eq!(c.succs[0], vec![1, 2]);
        assert_eq!(c.preds[3], vec![1, 2]);
        assert_eq!(c.preds[c.exit], vec![3]);
        assert_eq!(c.rpo()[0], 0);
    }

    #[test]
    fn single_block_exit() {
        let (_, c) = cfg_of("fn main() { b0: return; }");
        assert_eq!(c.preds[c.exit], vec![0]);
    }

    #[test]
    fn two_returns_precede_exit() {
        let (_, c) = cfg_of("fn main() { b0: branch b1 b2; b1: return; b2: return; }");
        assert_eq!(c.preds[c.exit], vec![1, 2]);
    }

    #[test]
    fn unreachable_warning() {
        let (p, c) = cfg_of("fn main() { b0: return; dead: goto b0; }");
        let w = c.warnings(p.main_fn());
        assert_eq!(w.len(), 1);
        assert!(w[0].to_string().contains("dead"));
    }
}
