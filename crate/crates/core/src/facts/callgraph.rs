// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use crate::ir::{BlockId, Callee, FuncId, Instr, Program};

/// May-call relation. Edges for a static call are exact. A dynamic call may
/// reach any address-taken function, and so may an extern call (callbacks).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallGraph {
    pub may_call: Vec<BTreeSet<FuncId>>,
    pub address_taken: BTreeSet<FuncId>,
    /// Callees per function and block.
    pub block_callees: Vec<Vec<BTreeSet<FuncId>>>,
    pub has_extern_calls: bool,
}

impl CallGraph {
    /// Functions a single instruction may transfer control to.
    pub fn instr_callees(&self, ins: &Instr) -> BTreeSet<FuncId> {
        match ins {
            Instr::Call { callee: Callee::Func(g), .. } => BTreeSet::from([*g]),
            Instr::Call { callee: Callee::Dynamic(_) | Callee::Extern(_), .. } => {
                self.address_taken.clone()
            }
            _ => BTreeSet::new(),
        }
    }

    pub fn calls(&self, f: FuncId, b: BlockId, g: FuncId) -> bool {
        self.block_callees[f][b].contains(&g)
    }

    /// Functions transitively reachable from `f` through calls, `f` excluded
    /// unless it lies on a cycle.
    pub fn reachable_from(&self, f: FuncId) -> BTreeSet<FuncId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<FuncId> = self.may_call[f].iter().copied().collect();
        while let Some(g) = stack.pop() {
            if seen.insert(g) {
                stack.extend(self.may_call[g].iter().copied());
            }
        }
        seen
    }

    /// Callees before callers, cycles broken in declaration order.
    pub fn bottom_up_order(&self) -> Vec<FuncId> {
        let n = self.may_call.len();
        let mut visited = vec![false; n];
        let mut out = Vec::with_capacity(n);
        for root in 0..n {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            let mut stack = vec![(root, self.may_call[root].iter().copied().collect::<Vec<_>>(), 0)];
            while let Some((node, succs, next)) = stack.last_mut() {
                if let Some(&s) = succs.get(*next) {
                    *next += 1;
                    if !visited[s] {
                        visited[s] = true;
                        let ss = self.may_call[s].iter().copied().collect();
                        stack.push((s, ss, 0));
                    }
                } else {
                    out.push(*node);
                    stack.pop();
                }
            }
        }
        out
    }
}

pub fn compute_callgraph(p: &Program) -> CallGraph {
    let mut address_taken = BTreeSet::new();
    let mut has_extern_calls = false;
    for f in &p.functions {
        for (_, _, ins) in f.instrs() {
            match ins {
                Instr::AddrOfFunc { func, .. } => {
                    address_taken.insert(*func);
                }
                Instr::Call { callee: Callee::Extern(_), .. } => has_extern_calls = true,
                _ => {}
            }
        }
    }
    let mut cg = CallGraph {
        may_call: vec![BTreeSet::new(); p.functions.len()],
        address_taken,
        block_callees: Vec::with_capacity(p.functions.len()),
        has_extern_calls,
    };
    for (fi, f) in p.functions.iter().enumerate() {
        let mut per_block = vec![BTreeSet::new(); f.blocks.len()];
        for (b, _, ins) in f.instrs() {
            let cs = cg.instr_callees(ins);
            per_block[b].extend(cs.iter().copied());
            cg.may_call[fi].extend(cs);
        }
        cg.block_callees.push(per_block);
    }
    cg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse;

    #[test]
    fn static_edges_are_exact() {
        let p = parse(
            "fn func_B(q) { b0: return; } fn func_C(r, s) { b0: return; }
             fn func_A(y) { b0: call func_B(y); call func_C(y, y); return; }
             fn main() { b0: call func_A(x); return; }",
        )
        .unwrap();
        let cg = compute_callgraph(&p);
        assert_eq!(cg.may_call[3], BTreeSet::from([2]));
        assert_eq!(cg.may_call[2], BTreeSet::from([0, 1]));
        assert!(cg.may_call[0].is_empty() && cg.may_call[1].is_empty());
        assert_eq!(cg.bottom_up_order(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn no_calls_no_edges() {
        let p = parse("fn main() { b0: return; }").unwrap();
        let cg = compute_callgraph(&p);
        assert!(cg.may_call.iter().all(BTreeSet::is_empty));
    }

    #[test]
    fn dynamic_call_reaches_all_address_taken() {
        let p = parse(
            "fn f() { b0: return; } fn g() { b0: return; } fn h() { b0: return; }
             fn main() { b0: a = &&f; b = &&g; call *a(); return; }",
        )
        .unwrap();
        let cg = compute_callgraph(&p);
        assert_eq!(cg.may_call[3], BTreeSet::from([0, 1]));
        assert_eq!(cg.address_taken, BTreeSet::from([0, 1]));
    }

    #[test]
    fn extern_calls_reach_address_taken() {
        let p = parse(
            "extern ext; fn cb() { b0: return; }
             fn main() { b0: a = &&cb; goto b1; b1: call ext(a); return; }",
        )
        .unwrap();
        let cg = compute_callgraph(&p);
        assert!(cg.calls(1, 1, 0));
        assert!(!cg.calls(1, 0, 0));
    }
}
