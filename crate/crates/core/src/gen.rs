// SPDX-License-Identifier: Apache-2.0

//! Seeded generator of small well-formed concurrent programs, biased toward
//! locks, thread creation and address-of. At most three threads run: main,
//! and up to two created outside of loops.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{parse, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenConfig {
    /// Upper bound on non-terminator instructions in the whole program.
    pub max_instrs: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { max_instrs: 40 }
    }
}

const HELPER_VIS: usize = 3;
const THREAD_VIS: usize = 6;
const MAIN_MT_VIS: usize = 3;

struct Block {
    label: String,
    instrs: Vec<String>,
    term: String,
}

struct FnGen {
    name: String,
    formals: Vec<String>,
    locals: Vec<String>,
    blocks: Vec<Block>,
    ptrs: Vec<String>,
    vals: Vec<String>,
    next_reg: usize,
    /// Functions get at most one loop.
    looped: bool,
}

impl FnGen {
    fn new(name: &str, formals: &[&str]) -> Self {
        FnGen {
            name: name.to_string(),
            formals: formals.iter().map(|s| s.to_string()).collect(),
            locals: Vec::new(),
            blocks: vec![Block { label: "b0".into(), instrs: Vec::new(), term: String::new() }],
            ptrs: formals.iter().map(|s| s.to_string()).collect(),
            vals: Vec::new(),
            next_reg: 0,
            looped: false,
        }
    }

    fn reg(&mut self, prefix: &str) -> String {
        self.next_reg += 1;
        format!("{prefix}{}", self.next_reg)
    }

    fn emit(&mut self, s: String) {
        self.blocks.last_mut().unwrap().instrs.push(s);
    }

    fn new_block(&mut self) -> String {
        format!("b{}", self.blocks.len())
    }

    fn open(&mut self, label: String) {
        self.blocks.push(Block { label, instrs: Vec::new(), term: String::new() });
    }

    fn close(&mut self, term: String) {
        self.blocks.last_mut().unwrap().term = term;
    }

    fn render(&self, out: &mut String) {
        let _ = writeln!(out, "fn {}({}) {{", self.name, self.formals.join(", "));
        if !self.locals.is_empty() {
            let _ = writeln!(out, "  locals {};", self.locals.join(", "));
        }
        for b in &self.blocks {
            let _ = writeln!(out, "  {}:", b.label);
            for i in &b.instrs {
                let _ = writeln!(out, "    {i}");
            }
            let _ = writeln!(out, "    {}", b.term);
        }
        out.push_str("}\n");
    }
}

struct Gen {
    rng: ChaCha8Rng,
    budget: usize,
    globals: Vec<(String, Option<Vec<String>>)>,
    locks: Vec<String>,
    helpers: Vec<String>,
    /// Upper bound on visible operations of one helper call.
    helper_vis: usize,
    has_extern: bool,
    /// Visible operations (reads, writes, lock, unlock) still allowed in the
    /// current function, counting each loop iteration separately.
    vis_left: usize,
    weight: usize,
    held: Vec<String>,
}

impl Gen {
    fn spend(&mut self, n: usize) -> bool {
        self.can(n, 0)
    }

    fn can(&mut self, instrs: usize, vis: usize) -> bool {
        let v = vis * self.weight;
        if self.budget < instrs || self.vis_left < v {
            return false;
        }
        self.budget -= instrs;
        self.vis_left -= v;
        true
    }

    fn free_lock(&mut self) -> Option<String> {
        let free: Vec<&String> = self.locks.iter().filter(|l| !self.held.contains(l)).collect();
        free.choose(&mut self.rng).map(|l| l.to_string())
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    /// Address of a global (or one of its fields) or of a local.
    fn addr(&mut self, f: &mut FnGen) {
        if !self.spend(1) {
            return;
        }
        let r = f.reg("p");
        let target = if !f.locals.is_empty() && self.chance(0.3) {
            f.locals.choose(&mut self.rng).unwrap().split(' ').next().unwrap().to_string()
        } else {
            let (g, fields) = self.globals.choose(&mut self.rng).unwrap().clone();
            match fields {
                Some(fs) if self.chance(0.7) => format!("{g}.{}", fs.choose(&mut self.rng).unwrap()),
                _ => g,
            }
        };
        f.emit(format!("{r} = &{target};"));
        f.ptrs.push(r);
    }

    fn value(&mut self, f: &mut FnGen) -> String {
        if let Some(v) = f.vals.choose(&mut self.rng) {
            if self.chance(0.7) {
                return v.clone();
            }
        }
        if f.ptrs.is_empty() || (self.chance(0.5) && self.spend(1)) {
            let r = f.reg("v");
            f.emit(format!("{r} = op();"));
            f.vals.push(r.clone());
            r
        } else {
            f.ptrs.choose(&mut self.rng).unwrap().clone()
        }
    }

    /// One simple operation in the current block.
    fn op(&mut self, f: &mut FnGen, allow_calls: bool) {
        if f.ptrs.is_empty() {
            self.addr(f);
            return;
        }
        let k = self.rng.gen_range(0..100);
        let p = f.ptrs.choose(&mut self.rng).unwrap().clone();
        match k {
            0..=29 => {
                if self.can(1, 1) {
                    let r = f.reg("v");
                    f.emit(format!("{r} = read *{p};"));
                    f.vals.push(r);
                }
            }
            30..=59 => {
                if self.can(1, 1) {
                    let v = self.value(f);
                    f.emit(format!("write *{p}, {v};"));
                }
            }
            60..=74 => {
                let Some(l) = self.free_lock() else { return };
                if self.can(3, 3) {
                    let q = f.ptrs.choose(&mut self.rng).unwrap().clone();
                    f.emit(format!("lock {l};"));
                    if self.chance(0.5) {
                        let r = f.reg("v");
                        f.emit(format!("{r} = read *{q};"));
                        f.vals.push(r);
                    } else {
                        let v = f.ptrs.choose(&mut self.rng).unwrap().clone();
                        f.emit(format!("write *{q}, {v};"));
                    }
                    f.emit(format!("unlock {l};"));
                }
            }
            75..=82 => self.addr(f),
            83..=91 if allow_calls && !self.helpers.is_empty() => {
                if self.can(1, self.helper_vis) {
                    let h = self.helpers.choose(&mut self.rng).unwrap().clone();
                    f.emit(format!("call {h}({p});"));
                }
            }
            92..=95 if allow_calls && self.has_extern => {
                if self.spend(1) {
                    f.emit(format!("call ext({p});"));
                }
            }
            _ => {
                // Publish a pointer, or load one back and use it.
                if self.chance(0.5) {
                    if self.can(1, 1) {
                        let q = f.ptrs.choose(&mut self.rng).unwrap().clone();
                        f.emit(format!("write *{p}, {q};"));
                    }
                } else if self.can(2, 2) {
                    let r = f.reg("q");
                    f.emit(format!("{r} = read *{p};"));
                    let s = f.reg("v");
                    f.emit(format!("{s} = read *{r};"));
                    f.vals.push(s);
                }
            }
        }
    }

    fn straight(&mut self, f: &mut FnGen, allow_calls: bool) {
        for _ in 0..self.rng.gen_range(1..=3) {
            self.op(f, allow_calls);
        }
    }

    /// A structured region: straight code, a diamond, a loop, or a lock held
    /// across a diamond.
    fn segment(&mut self, f: &mut FnGen, allow_calls: bool, depth: usize) {
        let mut k = if depth > 1 { 0 } else { self.rng.gen_range(0..10) };
        if (7..=8).contains(&k) && (f.looped || !allow_calls || depth > 0) {
            k = 0;
        }
        match k {
            0..=3 => self.straight(f, allow_calls),
            4..=6 => {
                let then_l = f.new_block();
                let split = f.blocks.len() - 1;
                f.open(then_l.clone());
                self.segment(f, allow_calls, depth + 1);
                let then_end = f.blocks.len() - 1;
                let else_l = f.new_block();
                f.open(else_l.clone());
                if self.chance(0.6) {
                    self.segment(f, allow_calls, depth + 1);
                }
                let else_end = f.blocks.len() - 1;
                let join = f.new_block();
                f.blocks[split].term = format!("branch {then_l} {else_l};");
                f.blocks[then_end].term = format!("goto {join};");
                f.blocks[else_end].term = format!("goto {join};");
                f.open(join);
            }
            7..=8 => {
                f.looped = true;
                let head = f.new_block();
                f.close(format!("goto {head};"));
                f.open(head.clone());
                let head_idx = f.blocks.len() - 1;
                let body = f.new_block();
                f.open(body.clone());
                let w = self.weight;
                self.weight = w * 4;
                self.straight(f, allow_calls);
                self.weight = w;
                f.close(format!("goto {head};"));
                let exit = f.new_block();
                f.blocks[head_idx].term = format!("branch {body} {exit};");
                f.open(exit);
            }
            _ => {
                let Some(l) = self.free_lock() else { return };
                if !self.can(2, 2) {
                    return;
                }
                f.emit(format!("lock {l};"));
                self.held.push(l.clone());
                self.segment(f, false, depth + 1);
                self.held.pop();
                f.emit(format!("unlock {l};"));
            }
        }
    }

    fn body(&mut self, f: &mut FnGen, allow_calls: bool, segments: usize) {
        for _ in 0..self.rng.gen_range(1..=2) {
            self.addr(f);
        }
        for _ in 0..segments {
            if self.budget == 0 {
                break;
            }
            self.segment(f, allow_calls, 0);
        }
    }
}

/// Generate program text for `seed`.
pub fn generate_source(seed: u64, cfg: GenConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut globals = Vec::new();
    for i in 0..rng.gen_range(1..=3) {
        let fields = rng.gen_bool(0.3).then(|| vec!["f0".to_string(), "f1".to_string()]);
        globals.push((format!("g{i}"), fields));
    }
    let locks: Vec<String> = (0..rng.gen_range(1..=2)).map(|i| format!("m{i}")).collect();
    let has_extern = rng.gen_bool(0.2);
    let threads = if rng.gen_bool(0.6) { 2 } else { 1 };
    let nested = threads == 2 && rng.gen_bool(0.3);
    // Main hands the address of its local to t0 through this global.
    let handoff = rng.gen_bool(0.15).then(|| rng.gen_range(0..globals.len()));
    // t0 reads this global, then writes it under m0; main writes it under m0.
    let guarded = rng.gen_bool(0.15).then(|| {
        let (n, fs) = &globals[rng.gen_range(0..globals.len())];
        match fs {
            Some(fs) => format!("{n}.{}", fs[0]),
            None => n.clone(),
        }
    });
    // Creates are paid for up front.
    let budget = rng.gen_range(cfg.max_instrs.min(12)..=cfg.max_instrs).saturating_sub(threads);
    let mut g = Gen { rng, budget, globals: globals.clone(), locks: locks.clone(), helpers: Vec::new(), helper_vis: 0, has_extern, vis_left: 0, weight: 1, held: Vec::new() };

    let mut funcs: Vec<FnGen> = Vec::new();
    if g.chance(0.5) {
        let mut h = FnGen::new("h0", &["a"]);
        if g.chance(0.4) {
            h.locals.push("hv".into());
        }
        g.vis_left = HELPER_VIS;
        g.body(&mut h, false, 1);
        g.helper_vis = HELPER_VIS - g.vis_left;
        h.close("return;".into());
        funcs.push(h);
        g.helpers.push("h0".into());
    }
    for t in 0..threads {
        let mut f = FnGen::new(&format!("t{t}"), &[]);
        if g.chance(0.4) {
            f.locals.push(format!("l{t}"));
        }
        g.vis_left = THREAD_VIS;
        if let (Some(h), 0) = (handoff, t) {
            if g.can(3, 2) {
                let (pg, q) = (f.reg("p"), f.reg("q"));
                f.emit(format!("{pg} = &{};", globals[h].0));
                f.emit(format!("{q} = read *{pg};"));
                f.ptrs.push(q.clone());
                let v = g.value(&mut f);
                f.emit(format!("write *{q}, {v};"));
            }
        }
        if let (Some(v), 0) = (&guarded, t) {
            if g.can(7, 6) {
                let (p, r) = (f.reg("p"), f.reg("v"));
                f.emit(format!("{p} = &{v};"));
                f.emit(format!("{r} = read *{p};"));
                f.emit("lock m0;".into());
                f.emit("unlock m0;".into());
                f.emit("lock m0;".into());
                f.emit(format!("write *{p}, {r};"));
                f.emit("unlock m0;".into());
            }
        }
        g.body(&mut f, true, 2);
        if nested && t == 0 {
            f.emit("create t1;".into());
            g.segment(&mut f, true, 1);
        }
        f.close("return;".into());
        funcs.push(f);
    }
    let mut m = FnGen::new("main", &[]);
    if handoff.is_some() || g.chance(0.3) {
        m.locals.push("ml".into());
    }
    // Single-threaded prefix.
    g.vis_left = usize::MAX / 8;
    let mut shared = None;
    if let Some(h) = handoff {
        if g.spend(3) {
            let (pm, pg) = (m.reg("p"), m.reg("p"));
            m.emit(format!("{pm} = &ml;"));
            m.emit(format!("{pg} = &{};", globals[h].0));
            m.emit(format!("write *{pg}, {pm};"));
            m.ptrs.push(pm.clone());
            shared = Some(pm);
        }
    }
    for _ in 0..g.rng.gen_range(1..=2) {
        g.addr(&mut m);
    }
    g.straight(&mut m, true);
    m.emit("create t0;".into());
    g.vis_left = MAIN_MT_VIS;
    if threads == 2 && !nested {
        if g.chance(0.5) {
            g.straight(&mut m, true);
        }
        m.emit("create t1;".into());
    }
    if let Some(pm) = shared {
        if g.can(1, 1) {
            let r = m.reg("v");
            m.emit(format!("{r} = read *{pm};"));
            m.vals.push(r);
        }
    }
    if let Some(v) = &guarded {
        if g.can(4, 3) {
            let p = m.reg("p");
            m.emit(format!("{p} = &{v};"));
            m.emit("lock m0;".into());
            let w = g.value(&mut m);
            m.emit(format!("write *{p}, {w};"));
            m.emit("unlock m0;".into());
        }
    }
    let mut left = g.rng.gen_range(0..=2);
    while left > 0 && g.budget > 0 {
        g.segment(&mut m, true, 0);
        left -= 1;
    }
    m.close("return;".into());
    funcs.push(m);

    let mut out = String::new();
    let gs: Vec<String> = globals
        .iter()
        .map(|(n, f)| match f {
            Some(fs) => format!("{n} {{ {} }}", fs.join(", ")),
            None => n.clone(),
        })
        .collect();
    let _ = writeln!(out, "// generated, seed {seed}");
    let _ = writeln!(out, "global {};", gs.join(", "));
    let _ = writeln!(out, "lock {};", locks.join(", "));
    if has_extern {
        let _ = writeln!(out, "extern ext;");
    }
    for f in &funcs {
        out.push('\n');
        f.render(&mut out);
    }
    out
}

pub fn generate(seed: u64, cfg: GenConfig) -> Program {
    let src = generate_source(seed, cfg);
    parse(&src).unwrap_or_else(|e| panic!("generator produced an invalid program ({e}):\n{src}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn programs_are_valid_and_small() {
        for seed in 0..300 {
            let p = generate(seed, GenConfig::default());
            let n: usize = p.functions.iter().map(|f| f.instrs().count()).sum();
            assert!(n <= 40, "seed {seed}: {n} instructions");
            assert!(p.create_targets().len() <= 2);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_source(42, GenConfig::default()), generate_source(42, GenConfig::default()));
        assert_ne!(generate_source(1, GenConfig::default()), generate_source(2, GenConfig::default()));
    }
}
