// SPDX-License-Identifier: Apache-2.0

//! Whole-program facts shared by the analyses.

mod callgraph;
mod dominance;
mod pointsto;

use serde_json::{json, Map, Value};

pub use callgraph::{compute_callgraph, CallGraph};
pub use dominance::{compute_dominance, DominanceInfo};
pub use pointsto::{addr_targets, all_locations, compute_pointsto, AbsLoc, PointsTo};

use crate::ir::{Cfg, Program};

#[derive(Debug, Clone)]
pub struct Facts {
    pub cg: CallGraph,
    pub pt: PointsTo,
    pub cfgs: Vec<Cfg>,
    pub dom: Vec<DominanceInfo>,
}

impl Facts {
    pub fn compute(p: &Program) -> Facts {
        let cfgs: Vec<Cfg> = p.functions.iter().map(Cfg::new).collect();
        let dom = cfgs.iter().map(compute_dominance).collect();
        Facts { cg: compute_callgraph(p), pt: compute_pointsto(p), cfgs, dom }
    }

    /// JSON view of call graph, points-to sets and dominator trees.
    pub fn to_json(&self, p: &Program) -> Value {
        let fname = |f: usize| Value::from(p.functions[f].name.clone());
        let mut funcs = Map::new();
        for (fi, f) in p.functions.iter().enumerate() {
            let label = |b: Option<usize>| match b {
                Some(b) if b == self.cfgs[fi].exit => Value::from("<exit>"),
                Some(b) => Value::from(f.blocks[b].label.clone()),
                None => Value::Null,
            };
            let mut regs = Map::new();
            for (r, name) in f.registers.iter().enumerate() {
                let set: Vec<String> = self.pt.reg(fi, r).iter().map(|l| l.render(p)).collect();
                regs.insert(name.clone(), json!(set));
            }
            let mut idom = Map::new();
            let mut ipdom = Map::new();
            for (b, block) in f.blocks.iter().enumerate() {
                let parent = |t: &[Option<usize>]| t[b].filter(|&x| x != b);
                idom.insert(block.label.clone(), label(parent(&self.dom[fi].idom)));
                ipdom.insert(block.label.clone(), label(parent(&self.dom[fi].ipostdom)));
            }
            funcs.insert(
                f.name.clone(),
                json!({
                    "calls": self.cg.may_call[fi].iter().map(|&g| fname(g)).collect::<Vec<_>>(),
                    "registers": regs,
                    "idom": idom,
                    "ipostdom": ipdom,
                }),
            );
        }
        let mut locs = Map::new();
        for (a, set) in &self.pt.locs {
            locs.insert(a.render(p), json!(set.iter().map(|l| l.render(p)).collect::<Vec<_>>()));
        }
        let mut writes = Map::new();
        for (l, set) in &self.pt.writes {
            writes.insert(l.render(p), json!(set.iter().map(|a| a.render(p)).collect::<Vec<_>>()));
        }
        json!({
            "address_taken": self.cg.address_taken.iter().map(|&g| fname(g)).collect::<Vec<_>>(),
            "extern_exposed": self.pt.extern_exposed.iter().map(|l| l.render(p)).collect::<Vec<_>>(),
            "functions": funcs,
            "locs": locs,
            "writes": writes,
        })
    }
}
